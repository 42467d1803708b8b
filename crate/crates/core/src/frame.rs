//! Single-channel luminance rasters and fixed-size patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FRAME_SIDE: usize = 64;
pub const PATCH_SIZE: usize = 256;

/// Row-major luminance raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::invalid(format!(
                "frame {width}x{height} is below the {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE} minimum"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "frame data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::invalid(format!(
                "frame value {} at index {i} is outside [0,1]",
                data[i]
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    /// Builds a frame from a function of `(row, col)`, clamping into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col).clamp(0.0, 1.0));
            }
        }
        Frame::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height])
    }

    /// Clamps every value into `[0,1]`. Callers guarantee the shape and finiteness.
    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Frame {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Copies the `size`×`size` window with top-left corner at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, size: usize) -> Result<Frame> {
        if row + size > self.height || col + size > self.width {
            return Err(Error::invalid(format!(
                "crop {size}x{size} at ({row},{col}) exceeds frame {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(size * size);
        for r in row..row + size {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + size]);
        }
        Frame::new(size, size, data)
    }
}

/// A 256×256 window of a source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    frame: Frame,
    origin: (usize, usize),
    source_frame_id: Option<String>,
}

impl Patch {
    pub fn new(frame: Frame, origin: (usize, usize), source_frame_id: Option<String>) -> Result<Self> {
        if frame.width() != PATCH_SIZE || frame.height() != PATCH_SIZE {
            return Err(Error::invalid(format!(
                "patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
                frame.width(),
                frame.height()
            )));
        }
        Ok(Patch {
            frame,
            origin,
            source_frame_id,
        })
    }

    /// Cuts the patch at `origin` out of `source`.
    pub fn cut(source: &Frame, origin: (usize, usize), source_frame_id: Option<String>) -> Result<Self> {
        let frame = source.crop(origin.0, origin.1, PATCH_SIZE)?;
        Patch::new(frame, origin, source_frame_id)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn origin(&self) -> (usize, usize) {
        self.origin
    }

    pub fn source_frame_id(&self) -> Option<&str> {
        self.source_frame_id.as_deref()
    }
}

/// Frame dimensions as `(width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: usize,
    pub height: usize,
}

impl FrameSize {
    pub fn square(side: usize) -> Self {
        FrameSize {
            width: side,
            height: side,
        }
    }
}

impl Default for FrameSize {
    fn default() -> Self {
        FrameSize::square(PATCH_SIZE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_and_out_of_range() {
        assert!(Frame::constant(63, 64, 0.5).is_err());
        assert!(Frame::new(64, 64, vec![1.5; 64 * 64]).is_err());
        assert!(Frame::new(64, 64, vec![f64::NAN; 64 * 64]).is_err());
        assert!(Frame::new(64, 64, vec![0.5; 10]).is_err());
    }

    #[test]
    fn crop_bounds() {
        let f = Frame::from_fn(300, 260, |r, c| ((r + c) % 7) as f64 / 7.0).unwrap();
        let p = Patch::cut(&f, (4, 44), None).unwrap();
        assert_eq!(p.frame().get(0, 0), f.get(4, 44));
        assert_eq!(p.frame().get(255, 255), f.get(259, 299));
        assert!(Patch::cut(&f, (5, 44), None).is_err());
    }
}
