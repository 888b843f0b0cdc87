//! Closed "stadium" road: two straights joined by half circles.
//!
//! The centerline is the set of points at distance `radius` from a central
//! segment of length `straight` on the x axis. Driving runs counterclockwise,
//! so the lateral offset `o` is positive toward the infield (the driver's
//! left) and the right-hand lane has negative offsets.

use std::f64::consts::PI;

/// Ground strip classes by absolute lateral offset, innermost first.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSection {
    /// `(outer edge, class)` pairs with increasing edges.
    pub bands: Vec<(f64, u8)>,
}

impl CrossSection {
    pub fn half_width(&self) -> f64 {
        self.bands.last().map_or(0.0, |b| b.0)
    }

    /// Class of the ground at lateral offset `o`, if there is ground.
    pub fn class_at(&self, o: f64) -> Option<u8> {
        let a = o.abs();
        self.bands.iter().find(|b| a <= b.0).map(|b| b.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stadium {
    pub straight: f64,
    pub radius: f64,
}

/// Position and heading of a point on an offset curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Station {
    pub x: f64,
    pub y: f64,
    /// Direction of travel, radians from +x toward +y.
    pub heading: f64,
}

impl Stadium {
    /// Centerline length.
    pub fn perimeter(&self) -> f64 {
        2.0 * self.straight + 2.0 * PI * self.radius
    }

    /// The four pieces (straight, arc, straight, arc) as centerline lengths.
    fn pieces(&self) -> [f64; 4] {
        let arc = PI * self.radius;
        [self.straight, arc, self.straight, arc]
    }

    /// Point at centerline arc length `u` (taken modulo the perimeter),
    /// shifted by `o` toward the infield.
    pub fn station(&self, u: f64, o: f64) -> Station {
        let (l, r) = (self.straight, self.radius);
        let mut u = u.rem_euclid(self.perimeter());
        let pieces = self.pieces();
        let mut piece = 0;
        while piece < 3 && u >= pieces[piece] {
            u -= pieces[piece];
            piece += 1;
        }
        let rr = r - o;
        match piece {
            0 => Station {
                x: -l / 2.0 + u,
                y: -rr,
                heading: 0.0,
            },
            1 => {
                let th = -PI / 2.0 + u / r;
                Station {
                    x: l / 2.0 + rr * th.cos(),
                    y: rr * th.sin(),
                    heading: th + PI / 2.0,
                }
            }
            2 => Station {
                x: l / 2.0 - u,
                y: rr,
                heading: PI,
            },
            _ => {
                let th = PI / 2.0 + u / r;
                Station {
                    x: -l / 2.0 + rr * th.cos(),
                    y: rr * th.sin(),
                    heading: th + PI / 2.0,
                }
            }
        }
    }

    /// Centerline arc length of the point lying `s` meters along the offset
    /// curve at `o`, measured from the same start.
    pub fn centerline_u(&self, s: f64, o: f64) -> f64 {
        let scale = (self.radius - o) / self.radius;
        let mut s = s.rem_euclid(2.0 * self.straight + 2.0 * PI * (self.radius - o));
        let mut u = 0.0;
        for (piece, &len_c) in self.pieces().iter().enumerate() {
            let len = if piece % 2 == 0 { len_c } else { len_c * scale };
            if s < len || piece == 3 {
                return u + if piece % 2 == 0 { s } else { s / scale };
            }
            s -= len;
            u += len_c;
        }
        unreachable!()
    }

    /// True when `u` lies on one of the straights.
    pub fn on_straight(&self, u: f64) -> bool {
        let u = u.rem_euclid(self.perimeter());
        let p = self.pieces();
        u < p[0] || (u >= p[0] + p[1] && u < p[0] + p[1] + p[2])
    }

    /// Lateral offset of a world point (positive toward the infield).
    pub fn lateral_offset(&self, x: f64, y: f64) -> f64 {
        let h = self.straight / 2.0;
        let cx = x.clamp(-h, h);
        self.radius - (x - cx).hypot(y)
    }

    /// Samples the offset curve at lateral offset `o` with spacing close to
    /// `spacing`, placing samples at cell centers of each piece. Returns
    /// `(x, y)` positions.
    pub fn sample_row(&self, o: f64, spacing: f64, out: &mut Vec<(f64, f64)>) {
        let rr = self.radius - o;
        let arc = PI * rr;
        let mut start = 0.0;
        for (piece, &len_c) in self.pieces().iter().enumerate() {
            let len = if piece % 2 == 0 { len_c } else { arc };
            if len > 0.0 {
                let n = (len / spacing).round().max(1.0) as usize;
                for i in 0..n {
                    let frac = (i as f64 + 0.5) / n as f64;
                    let st = self.station(start + frac * len_c, o);
                    out.push((st.x, st.y));
                }
            }
            start += len_c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_round_trip() {
        let s = Stadium {
            straight: 40.0,
            radius: 20.0,
        };
        for k in 0..200 {
            let u = k as f64 * s.perimeter() / 200.0 + 0.01;
            for o in [-7.0, -1.75, 0.0, 3.0] {
                let st = s.station(u, o);
                assert!((s.lateral_offset(st.x, st.y) - o).abs() < 1e-9, "u={u} o={o}");
            }
        }
    }

    #[test]
    fn heading_follows_the_curve() {
        let s = Stadium {
            straight: 40.0,
            radius: 20.0,
        };
        for k in 0..100 {
            let u = k as f64 * s.perimeter() / 100.0 + 0.3;
            let a = s.station(u, -1.75);
            let b = s.station(u + 1e-4, -1.75);
            let h = (b.y - a.y).atan2(b.x - a.x);
            let diff = (h - a.heading).sin().abs();
            assert!(diff < 1e-3, "u={u}");
        }
    }

    #[test]
    fn lane_distance_is_arc_length() {
        let s = Stadium {
            straight: 30.0,
            radius: 12.0,
        };
        let o = -1.75;
        let n = 2000;
        let len = 2.0 * 30.0 + 2.0 * PI * (12.0 + 1.75);
        let mut prev = s.station(s.centerline_u(0.0, o), o);
        for i in 1..=n {
            let st = s.station(s.centerline_u(i as f64 * len / n as f64, o), o);
            let d = (st.x - prev.x).hypot(st.y - prev.y);
            assert!((d - len / n as f64).abs() < 1e-6, "{i} {d}");
            prev = st;
        }
    }

    #[test]
    fn rows_are_evenly_spaced() {
        let s = Stadium {
            straight: 10.0,
            radius: 5.0,
        };
        let mut pts = Vec::new();
        s.sample_row(-2.0, 0.1, &mut pts);
        let n = pts.len();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let d = (a.0 - b.0).hypot(a.1 - b.1);
            assert!(d > 0.09 && d < 0.11, "{d}");
        }
    }
}
