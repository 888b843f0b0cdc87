use crate::error::{Error, Result};
use crate::semantic_map::VOID;

/// Per-pixel semantic class ids, row-major; 255 is void.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new_void(width: usize, height: usize) -> Self {
        LabelMap::filled(width, height, VOID)
    }

    pub fn filled(width: usize, height: usize, class_id: u8) -> Self {
        LabelMap {
            width,
            height,
            data: vec![class_id; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "label buffer has {} entries, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(LabelMap { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, class_id: u8) {
        self.data[j * self.width + i] = class_id;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn void_count(&self) -> usize {
        self.data.iter().filter(|&&c| c == VOID).count()
    }

    /// Keeps every `factor`-th pixel in each direction, starting at (0, 0).
    pub fn downsample(&self, factor: usize) -> LabelMap {
        if factor <= 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            let row = &self.data[j * factor * self.width..];
            data.extend((0..w).map(|i| row[i * factor]));
        }
        LabelMap {
            width: w,
            height: h,
            data,
        }
    }

    pub(crate) fn check_same_dims(&self, w: usize, h: usize) -> Result<()> {
        if (self.width, self.height) != (w, h) {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: w,
                right_h: h,
            });
        }
        Ok(())
    }
}

/// Per-pixel camera-space depth in meters; 0 marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "depth buffer has {} entries, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::invalid(format!("depth value {bad} is not finite and >= 0")));
        }
        Ok(DepthMap { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, depth: f32) {
        self.data[j * self.width + i] = depth;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }
}
