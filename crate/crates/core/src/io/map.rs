use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::{read_bytes, read_text, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::semantic_map::{ClassInfo, ClassRegistry, SemanticPoint, SemanticPointCloud, SplatTable};

const MAP_MAGIC: &[u8; 8] = b"DELSMAP1";
const HEADER_LEN: u64 = 8 + 4 + 1 + 1;
const POINT_LEN: u64 = 14;

fn class_count(map: &SemanticPointCloud) -> u8 {
    let mut seen = [false; 256];
    for p in &map.points {
        seen[p.class_id as usize] = true;
    }
    seen.iter().filter(|&&s| s).count().min(255) as u8
}

pub fn map_to_bytes(map: &SemanticPointCloud) -> Result<Vec<u8>> {
    map.validate(None)?;
    let n = u32::try_from(map.len()).map_err(|_| Error::invalid("map has more than 2^32 points"))?;
    let mut out = Vec::with_capacity((HEADER_LEN + POINT_LEN * n as u64) as usize);
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.push(map.round_count);
    out.push(class_count(map));
    for p in &map.points {
        for c in p.position.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.push(p.class_id);
        out.push(p.round_id);
    }
    Ok(out)
}

pub fn map_from_bytes(bytes: &[u8]) -> Result<SemanticPointCloud> {
    let mut r = Reader::new(bytes, "map file");
    r.magic(MAP_MAGIC)?;
    let n = r.u32()?;
    r.expect_len(HEADER_LEN + POINT_LEN * n as u64)?;
    let rounds = r.u8()?;
    let classes = r.u8()?;
    let mut points = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let (x, y, z) = (r.f32()?, r.f32()?, r.f32()?);
        let class_id = r.u8()?;
        let round_id = r.u8()?;
        points.push(SemanticPoint::new(Point3::new(x, y, z), class_id, round_id));
    }
    r.finish()?;
    let map = SemanticPointCloud::new(points, rounds);
    if class_count(&map) != classes {
        return Err(Error::invalid(format!(
            "map header lists {classes} classes but the points use {}",
            class_count(&map)
        )));
    }
    map.validate(None)?;
    Ok(map)
}

pub fn save_map(path: &Path, map: &SemanticPointCloud) -> Result<()> {
    write_bytes(path, &map_to_bytes(map)?)
}

pub fn load_map(path: &Path) -> Result<SemanticPointCloud> {
    map_from_bytes(&read_bytes(path)?)
}

pub fn registry_to_string(reg: &ClassRegistry) -> String {
    let mut s = String::from("# id name is_road is_dynamic weight\n");
    for c in reg.classes() {
        writeln!(
            s,
            "{} {} {} {} {}",
            c.id, c.name, c.is_road as u8, c.is_dynamic as u8, c.weight
        )
        .unwrap();
    }
    s
}

fn parse_err(what: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        what: what.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_flag(s: &str, what: &str, line: usize) -> Result<bool> {
    match s {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        _ => Err(parse_err(what, line, format!("expected 0 or 1, found {s:?}"))),
    }
}

pub fn parse_registry(text: &str, what: &str) -> Result<ClassRegistry> {
    let mut classes = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(parse_err(what, n + 1, format!("expected 5 fields, found {}", f.len())));
        }
        let id = f[0]
            .parse::<u8>()
            .map_err(|e| parse_err(what, n + 1, format!("bad class id {:?}: {e}", f[0])))?;
        let weight = f[4]
            .parse::<f64>()
            .map_err(|e| parse_err(what, n + 1, format!("bad weight {:?}: {e}", f[4])))?;
        classes.push(ClassInfo {
            id,
            name: f[1].to_string(),
            is_road: parse_flag(f[2], what, n + 1)?,
            is_dynamic: parse_flag(f[3], what, n + 1)?,
            weight,
        });
    }
    ClassRegistry::new(classes)
}

pub fn save_registry(path: &Path, reg: &ClassRegistry) -> Result<()> {
    write_bytes(path, registry_to_string(reg).as_bytes())
}

pub fn load_registry(path: &Path) -> Result<ClassRegistry> {
    parse_registry(&read_text(path)?, &path.display().to_string())
}

/// Splat table text: a `range s_min s_max` line, then `class_id size` lines
/// for every class that differs from `s_min`.
pub fn splats_to_string(t: &SplatTable) -> String {
    let mut s = String::from("# per-class splat side in meters\n");
    writeln!(s, "range {} {}", t.s_min, t.s_max).unwrap();
    for (c, v) in t.entries() {
        writeln!(s, "{c} {v}").unwrap();
    }
    s
}

pub fn parse_splats(text: &str, what: &str) -> Result<SplatTable> {
    let mut range = None;
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(what, n + 1, format!("bad number {s:?}: {e}")))
        };
        match f.as_slice() {
            ["range", lo, hi] => range = Some((num(lo)?, num(hi)?)),
            [c, v] => {
                let c = c
                    .parse::<u8>()
                    .map_err(|e| parse_err(what, n + 1, format!("bad class id {c:?}: {e}")))?;
                entries.push((c, num(v)?));
            }
            _ => return Err(parse_err(what, n + 1, "expected `range lo hi` or `class size`")),
        }
    }
    let (lo, hi) = range.ok_or_else(|| parse_err(what, 0, "missing range line"))?;
    SplatTable::from_entries(lo, hi, &entries)
}

pub fn save_splats(path: &Path, t: &SplatTable) -> Result<()> {
    write_bytes(path, splats_to_string(t).as_bytes())
}

pub fn load_splats(path: &Path) -> Result<SplatTable> {
    parse_splats(&read_text(path)?, &path.display().to_string())
}
