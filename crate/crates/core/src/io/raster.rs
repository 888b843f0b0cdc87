use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use log::warn;

use super::{read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::fusion::Mask;
use crate::render::{DepthMap, LabelMap};

const DPT_MAGIC: &[u8; 8] = b"DELSDPT1";
/// Largest depth a 16-bit millimeter PNG can hold.
const PNG_DEPTH_MAX_MM: f32 = 65535.0;

fn png_bytes(img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(buf.into_inner())
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

fn dims_u32(w: usize, h: usize) -> Result<(u32, u32)> {
    Ok((
        u32::try_from(w).map_err(|_| Error::invalid("raster too wide"))?,
        u32::try_from(h).map_err(|_| Error::invalid("raster too tall"))?,
    ))
}

pub fn save_label_png(path: &Path, labels: &LabelMap) -> Result<()> {
    let (w, h) = dims_u32(labels.width(), labels.height())?;
    let img = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, labels.as_slice().to_vec()).expect("sized buffer");
    write_bytes(path, &png_bytes(DynamicImage::ImageLuma8(img))?)
}

pub fn load_label_png(path: &Path) -> Result<LabelMap> {
    match decode_png(&read_bytes(path)?, path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            LabelMap::from_raw(w as usize, h as usize, img.into_raw())
        }
        other => Err(Error::Image(format!(
            "{}: label maps must be 8-bit grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// 16-bit PNG in millimeters. Depths beyond 65.535 m are clamped.
pub fn save_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = dims_u32(depth.width(), depth.height())?;
    let mut clamped = 0usize;
    let data: Vec<u16> = depth
        .as_slice()
        .iter()
        .map(|&d| {
            let mm = (d * 1000.0).round();
            if mm > PNG_DEPTH_MAX_MM {
                clamped += 1;
                u16::MAX
            } else {
                mm as u16
            }
        })
        .collect();
    if clamped > 0 {
        warn!("{}: {clamped} depths beyond 65.535 m clamped", path.display());
    }
    let img = ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data).expect("sized buffer");
    write_bytes(path, &png_bytes(DynamicImage::ImageLuma16(img))?)
}

pub fn depth_from_png_bytes(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    match decode_png(bytes, path)? {
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            let data = img.into_raw().into_iter().map(|mm| mm as f32 / 1000.0).collect();
            DepthMap::from_raw(w as usize, h as usize, data)
        }
        other => Err(Error::Image(format!(
            "{}: depth PNGs must be 16-bit grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn load_depth_png(path: &Path) -> Result<DepthMap> {
    depth_from_png_bytes(&read_bytes(path)?, path)
}

pub fn save_dpt(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = dims_u32(depth.width(), depth.height())?;
    let mut out = Vec::with_capacity(16 + 4 * depth.as_slice().len());
    out.extend_from_slice(DPT_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for d in depth.as_slice() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn load_dpt(path: &Path) -> Result<DepthMap> {
    let bytes = read_bytes(path)?;
    let mut r = Reader::new(&bytes, "depth file");
    r.magic(DPT_MAGIC)?;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    r.expect_len(16 + 4 * (w as u64) * (h as u64))?;
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        data.push(r.f32()?);
    }
    r.finish()?;
    DepthMap::from_raw(w, h, data)
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Saves a depth map as `.png` (millimeters) or, for any other extension,
/// as a lossless `.dpt`.
pub fn save_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    if is_png(path) {
        save_depth_png(path, depth)
    } else {
        save_dpt(path, depth)
    }
}

pub fn load_depth(path: &Path) -> Result<DepthMap> {
    if is_png(path) {
        load_depth_png(path)
    } else {
        load_dpt(path)
    }
}

/// 8-bit PNG mask; any non-zero pixel is set.
pub fn load_mask_png(path: &Path) -> Result<Mask> {
    match decode_png(&read_bytes(path)?, path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Ok(Mask {
                width: w as usize,
                height: h as usize,
                data: img.into_raw().into_iter().map(|v| v != 0).collect(),
            })
        }
        other => Err(Error::Image(format!(
            "{}: masks must be 8-bit grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn save_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let (w, h) = dims_u32(mask.width, mask.height)?;
    let data = mask.data.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).expect("sized buffer");
    write_bytes(path, &png_bytes(DynamicImage::ImageLuma8(img))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = LabelMap::from_raw(37, 21, (0..37 * 21).map(|_| rng.gen()).collect()).unwrap();
        let p = dir.path().join("l.png");
        save_label_png(&p, &l).unwrap();
        assert_eq!(load_label_png(&p).unwrap(), l);
    }

    #[test]
    fn depth_png_to_the_millimeter() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f32> = (0..40 * 30)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.1..65.0)
                }
            })
            .collect();
        let d = DepthMap::from_raw(40, 30, data).unwrap();
        let p = dir.path().join("d.png");
        save_depth(&p, &d).unwrap();
        let back = load_depth(&p).unwrap();
        for (a, b) in d.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.0005 + 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn depth_png_clamps_far_values() {
        let dir = tempfile::tempdir().unwrap();
        let d = DepthMap::from_raw(2, 1, vec![100.0, 1.0]).unwrap();
        let p = dir.path().join("far.png");
        save_depth_png(&p, &d).unwrap();
        assert_eq!(load_depth_png(&p).unwrap().as_slice(), &[65.535, 1.0]);
    }

    #[test]
    fn dpt_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DepthMap::from_raw(13, 7, (0..91).map(|_| rng.gen_range(0.0..300.0)).collect()).unwrap();
        let p = dir.path().join("d.dpt");
        save_depth(&p, &d).unwrap();
        assert_eq!(load_depth(&p).unwrap(), d);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_dpt(&p), Err(Error::Truncated { .. })));
    }

    #[test]
    fn mask_round_trip_and_wrong_depth() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Mask::new(5, 4);
        m.set(1, 2, true);
        let p = dir.path().join("m.png");
        save_mask_png(&p, &m).unwrap();
        assert_eq!(load_mask_png(&p).unwrap(), m);
        let d = DepthMap::from_raw(2, 1, vec![1.0, 2.0]).unwrap();
        let q = dir.path().join("d.png");
        save_depth_png(&q, &d).unwrap();
        assert!(load_label_png(&q).is_err());
    }
}
