//! Tiny anti-aliased rasterizer for the 64x64 grayscale observation mode.

pub const IMAGE_SIDE: usize = 64;
pub const IMAGE_SHAPE: [usize; 3] = [IMAGE_SIDE, IMAGE_SIDE, 1];

/// Maps world rectangle [x0, x1] x [y0, y1] onto the pixel grid, y up.
pub(crate) struct Canvas {
    x0: f64,
    y1: f64,
    px_w: f64,
    px_h: f64,
}

impl Canvas {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            x0,
            y1,
            px_w: (x1 - x0) / IMAGE_SIDE as f64,
            px_h: (y1 - y0) / IMAGE_SIDE as f64,
        }
    }

    /// Fills `pixels` (row-major, top row first) by evaluating `shade` at
    /// each pixel centre. `shade` receives the world coordinates and the
    /// pixel size and must return a value in [0, 1].
    pub fn paint(&self, pixels: &mut [f64], shade: impl Fn(f64, f64, f64) -> f64) {
        let px = self.px_w.max(self.px_h);
        for row in 0..IMAGE_SIDE {
            let y = self.y1 - (row as f64 + 0.5) * self.px_h;
            for col in 0..IMAGE_SIDE {
                let x = self.x0 + (col as f64 + 0.5) * self.px_w;
                pixels[row * IMAGE_SIDE + col] = shade(x, y, px).clamp(0.0, 1.0);
            }
        }
    }
}

/// Coverage of a disc of `radius` at offset (dx, dy), one pixel of falloff.
pub(crate) fn soft_disc(dx: f64, dy: f64, radius: f64, px: f64) -> f64 {
    ((radius - dx.hypot(dy)) / px + 0.5).clamp(0.0, 1.0)
}

pub(crate) fn soft_ring(dx: f64, dy: f64, radius: f64, px: f64) -> f64 {
    (1.0 - (dx.hypot(dy) - radius).abs() / px).clamp(0.0, 1.0)
}
