use std::path::Path;

use super::{read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::road::RoadOffsetField;

const ROAD_MAGIC: &[u8; 8] = b"DELSROAD";
const HEADER_LEN: u64 = 8 + 24 + 8;
const CELL_LEN: u64 = 5;

pub fn field_to_bytes(f: &RoadOffsetField) -> Result<Vec<u8>> {
    let w = u32::try_from(f.width).map_err(|_| Error::invalid("road field too wide"))?;
    let h = u32::try_from(f.height).map_err(|_| Error::invalid("road field too tall"))?;
    let mut out = Vec::with_capacity((HEADER_LEN + CELL_LEN * w as u64 * h as u64) as usize);
    out.extend_from_slice(ROAD_MAGIC);
    out.extend_from_slice(&f.origin[0].to_le_bytes());
    out.extend_from_slice(&f.origin[1].to_le_bytes());
    out.extend_from_slice(&f.cell.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for (&(dx, dy), &road) in f.offsets.iter().zip(&f.road) {
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
        out.push(road as u8);
    }
    Ok(out)
}

pub fn field_from_bytes(bytes: &[u8]) -> Result<RoadOffsetField> {
    let mut r = Reader::new(bytes, "road field");
    r.magic(ROAD_MAGIC)?;
    let origin = [r.f64()?, r.f64()?];
    let cell = r.f64()?;
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    r.expect_len(HEADER_LEN + CELL_LEN * w as u64 * h as u64)?;
    if !(cell.is_finite() && cell > 0.0) || w == 0 || h == 0 {
        return Err(Error::invalid(format!(
            "road field header is invalid: cell {cell}, {w}x{h}"
        )));
    }
    let mut offsets = Vec::with_capacity(w * h);
    let mut road = Vec::with_capacity(w * h);
    for n in 0..w * h {
        let (dx, dy) = (r.i16()?, r.i16()?);
        let flag = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::invalid(format!("road flag {v} at cell {n}"))),
        };
        let (tc, tr) = ((n % w) as i64 + dx as i64, (n / w) as i64 + dy as i64);
        if tc < 0 || tr < 0 || tc >= w as i64 || tr >= h as i64 {
            return Err(Error::invalid(format!("road offset at cell {n} leaves the grid")));
        }
        offsets.push((dx, dy));
        road.push(flag);
    }
    r.finish()?;
    Ok(RoadOffsetField {
        origin,
        cell,
        width: w,
        height: h,
        offsets,
        road,
    })
}

pub fn save_road_field(path: &Path, f: &RoadOffsetField) -> Result<()> {
    write_bytes(path, &field_to_bytes(f)?)
}

pub fn load_road_field(path: &Path) -> Result<RoadOffsetField> {
    field_from_bytes(&read_bytes(path)?)
}
