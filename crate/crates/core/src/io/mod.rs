//! File formats: maps, class registries, poses, rasters, road fields and
//! configuration.

mod config;
mod map;
mod poses;
mod raster;
mod road;

pub use config::{CameraConfig, Config, FusionConfig, MapConfig, TrialsConfig};
pub use map::{
    load_map, load_registry, load_splats, map_from_bytes, map_to_bytes, parse_registry, parse_splats,
    registry_to_string, save_map, save_registry, save_splats, splats_to_string,
};
pub use poses::{format_poses, load_poses, parse_poses, save_poses, FramePose};
pub use raster::{
    depth_from_png_bytes, load_depth, load_depth_png, load_dpt, load_label_png, load_mask_png, save_depth,
    save_depth_png, save_dpt, save_label_png, save_mask_png,
};
pub use road::{field_from_bytes, field_to_bytes, load_road_field, save_road_field};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor over a byte buffer with length checks.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
    expected: u64,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader {
            buf,
            pos: 0,
            what,
            expected: 0,
        }
    }

    /// Declares the total length the file should have, failing early if it
    /// is shorter.
    pub fn expect_len(&mut self, total: u64) -> Result<()> {
        self.expected = total;
        if (self.buf.len() as u64) < total {
            return Err(Error::Truncated {
                what: self.what,
                expected: total,
                actual: self.buf.len() as u64,
            });
        }
        Ok(())
    }

    pub fn magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let found = self.take(8)?;
        if found != magic {
            return Err(Error::BadMagic {
                what: self.what,
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                what: self.what,
                expected: self.expected.max((self.pos + n) as u64),
                actual: self.buf.len() as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::invalid(format!(
                "{}: {} trailing bytes after {} expected",
                self.what,
                self.buf.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}
