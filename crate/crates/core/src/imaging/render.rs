use serde::{Deserialize, Serialize};

use super::{Image, ImagingError};
use crate::symbology::{BarPattern, MODULES};

/// Layout of a rendered barcode on a square white canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOpts {
    /// Pixels per module, at least 2.
    pub module_width: u32,
    pub bar_height: u32,
    /// White margin on each side of the symbol.
    pub quiet_zone: u32,
    /// Side of the square output image.
    pub canvas: u32,
}

impl Default for RenderOpts {
    fn default() -> Self {
        Self { module_width: 2, bar_height: 180, quiet_zone: 20, canvas: 285 }
    }
}

impl RenderOpts {
    pub fn symbol_width(&self) -> u32 {
        MODULES as u32 * self.module_width + 2 * self.quiet_zone
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        if self.module_width < 2 {
            return Err(ImagingError::InvalidOptions("module_width must be >= 2".into()));
        }
        if self.bar_height == 0 {
            return Err(ImagingError::InvalidOptions("bar_height must be >= 1".into()));
        }
        let needed = self.symbol_width().max(self.bar_height);
        if needed > self.canvas {
            return Err(ImagingError::CanvasTooSmall { needed, canvas: self.canvas });
        }
        Ok(())
    }

    /// Pixel column of the first module and pixel row of the top of the bars.
    pub fn origin(&self) -> (u32, u32) {
        let left = (self.canvas - self.symbol_width()) / 2 + self.quiet_zone;
        let top = (self.canvas - self.bar_height) / 2;
        (left, top)
    }
}

/// Draws the pattern centered on a white canvas.
pub fn render(pat: &BarPattern, opts: &RenderOpts) -> Result<Image, ImagingError> {
    opts.validate()?;
    let side = opts.canvas as usize;
    let mut img = Image::filled(side, side, 255);
    let (left, top) = opts.origin();
    let mw = opts.module_width as usize;
    let mut row = vec![255u8; side];
    for (i, &dark) in pat.modules().iter().enumerate() {
        if dark {
            let x0 = left as usize + i * mw;
            row[x0..x0 + mw].fill(0);
        }
    }
    for y in top as usize..(top + opts.bar_height) as usize {
        img.pixels_mut()[y * side..(y + 1) * side].copy_from_slice(&row);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbology::{decode_exact, encode, DigitSequence};

    #[test]
    fn all_light_pattern_renders_white() {
        let img = render(&BarPattern::from_modules([false; MODULES]), &RenderOpts::default()).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 255));
    }

    #[test]
    fn run_widths_scale_with_module_width() {
        let seq: DigitSequence = "5901234123457".parse().unwrap();
        let pat = encode(&seq);
        let opts = RenderOpts { module_width: 3, bar_height: 40, quiet_zone: 0, canvas: 285 };
        let img = render(&pat, &opts).unwrap();
        let (left, top) = opts.origin();
        let row = img.row(top as usize + 5);
        let strip = &row[left as usize..left as usize + 95 * 3];
        let mut runs: Vec<(bool, usize)> = Vec::new();
        for &p in strip {
            let dark = p == 0;
            match runs.last_mut() {
                Some((c, n)) if *c == dark => *n += 1,
                _ => runs.push((dark, 1)),
            }
        }
        let expected: Vec<(bool, usize)> = pat.runs().into_iter().map(|(c, n)| (c, 3 * n)).collect();
        assert_eq!(runs, expected);
    }

    #[test]
    fn center_row_reads_back_exactly() {
        let seq: DigitSequence = "5901234123457".parse().unwrap();
        let opts = RenderOpts::default();
        let img = render(&encode(&seq), &opts).unwrap();
        let (left, _) = opts.origin();
        let row = img.row(img.height() / 2);
        // quantize by sampling the middle of each module
        let mw = opts.module_width as usize;
        let mut modules = [false; MODULES];
        for (i, m) in modules.iter_mut().enumerate() {
            *m = row[left as usize + i * mw + mw / 2] < 128;
        }
        assert_eq!(decode_exact(&BarPattern::from_modules(modules)).unwrap(), seq);
    }

    #[test]
    fn canvas_too_small() {
        let opts = RenderOpts { module_width: 3, bar_height: 40, quiet_zone: 10, canvas: 285 };
        let pat = BarPattern::from_modules([false; MODULES]);
        assert!(matches!(render(&pat, &opts), Err(ImagingError::CanvasTooSmall { .. })));
        let opts = RenderOpts { module_width: 1, ..RenderOpts::default() };
        assert!(matches!(render(&pat, &opts), Err(ImagingError::InvalidOptions(_))));
    }
}
