use std::io::Write;
use std::path::Path;

use super::RenderError;

/// 8-bit RGB image, row-major, top row first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// PNG bytes, 8-bit RGB without alpha.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer.write_image_data(&self.data).expect("in-memory PNG data");
        }
        out
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, RenderError> {
        let decoder = png::Decoder::new(bytes);
        let mut reader = decoder.read_info().map_err(|e| RenderError::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| RenderError::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
            return Err(RenderError::Png("expected 8-bit RGB".into()));
        }
        buf.truncate(info.buffer_size());
        Ok(Self {
            width: info.width,
            height: info.height,
            data: buf,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RenderError> {
        std::fs::write(path, self.to_png()).map_err(|e| RenderError::Io(format!("{}: {e}", path.display())))
    }
}

/// Writes a depth map as a little-endian grayscale PFM (bottom row first).
pub fn write_pfm(path: &Path, width: u32, height: u32, depth: &[f64]) -> Result<(), RenderError> {
    let io = |e: std::io::Error| RenderError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    write!(f, "Pf\n{width} {height}\n-1.0\n").map_err(io)?;
    for row in (0..height as usize).rev() {
        for v in &depth[row * width as usize..(row + 1) * width as usize] {
            f.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let mut img = RgbImage::filled(17, 16, [64, 64, 64]);
        img.set_pixel(3, 4, [1, 2, 3]);
        let back = RgbImage::from_png(&img.to_png()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pfm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        write_pfm(&p, 2, 2, &[1.0, 2.0, 3.0, f64::INFINITY]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
        assert_eq!(bytes.len(), header.len() + 16);
    }
}
