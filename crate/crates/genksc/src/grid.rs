//! Grayscale tile grids written as binary PGM (P5) or PNG.

use std::fs;
use std::path::Path;

use crate::FormatError;

/// White gap between neighbouring tiles, in pixels.
pub const SEPARATOR: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    pub rows: usize,
    pub cols: usize,
    pub tile_height: usize,
    pub tile_width: usize,
    /// Row-major tiles, each `tile_height × tile_width` values in `[0, 1]`.
    pub tiles: Vec<Vec<f64>>,
    pub caption: String,
}

/// `round(255 · clamp(v, 0, 1))`; NaN maps to 0.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, tile_height: usize, tile_width: usize, tiles: Vec<Vec<f64>>, caption: impl Into<String>) -> Result<Self, FormatError> {
        if rows == 0 || cols == 0 || tiles.len() != rows * cols {
            return Err(FormatError::Invalid(format!("{} tiles for a {}×{} grid", tiles.len(), rows, cols)));
        }
        if let Some(t) = tiles.iter().find(|t| t.len() != tile_height * tile_width) {
            return Err(FormatError::Invalid(format!("tile of {} values, expected {}×{}", t.len(), tile_height, tile_width)));
        }
        Ok(Self {
            rows,
            cols,
            tile_height,
            tile_width,
            tiles,
            caption: caption.into(),
        })
    }

    pub fn width(&self) -> usize {
        self.cols * self.tile_width + (self.cols - 1) * SEPARATOR
    }

    pub fn height(&self) -> usize {
        self.rows * self.tile_height + (self.rows - 1) * SEPARATOR
    }

    /// Composed 8-bit pixels, row-major.
    pub fn pixels(&self) -> Vec<u8> {
        let (w, h) = (self.width(), self.height());
        let mut out = vec![255u8; w * h];
        for (t, tile) in self.tiles.iter().enumerate() {
            let y0 = (t / self.cols) * (self.tile_height + SEPARATOR);
            let x0 = (t % self.cols) * (self.tile_width + SEPARATOR);
            for y in 0..self.tile_height {
                let row = &tile[y * self.tile_width..(y + 1) * self.tile_width];
                for (x, &v) in row.iter().enumerate() {
                    out[(y0 + y) * w + x0 + x] = quantize(v);
                }
            }
        }
        out
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let caption: String = self.caption.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
        let mut out = format!("P5\n# {}\n{} {}\n255\n", caption, self.width(), self.height()).into_bytes();
        out.extend(self.pixels());
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, FormatError> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width() as u32, self.height() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("Description".into(), self.caption.clone())
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        let mut writer = enc.write_header().map_err(|e| FormatError::Io(e.to_string()))?;
        writer.write_image_data(&self.pixels()).map_err(|e| FormatError::Io(e.to_string()))?;
        writer.finish().map_err(|e| FormatError::Io(e.to_string()))?;
        Ok(out)
    }
}

/// Writes PNG for a `.png` path and PGM otherwise.
pub fn render_grid(grid: &ImageGrid, path: &Path) -> Result<(), FormatError> {
    let png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if png { grid.encode_png()? } else { grid.encode_pgm() };
    fs::write(path, bytes).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))
}

/// Parses a binary PGM with maxval 255 into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), FormatError> {
    let bad = |m: &str| FormatError::Invalid(format!("pgm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::Truncated("pgm header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = &bytes[pos + 1..];
    if body.len() != w * h {
        return Err(FormatError::Truncated(format!("pgm body: {} bytes for {}×{}", body.len(), w, h)));
    }
    Ok((w, h, body.to_vec()))
}
