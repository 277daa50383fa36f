//! Grayscale PNG rendering of dataset images for display.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

/// Encodes intensities in `[0, 1]` (row-major, `width * height`) as an
/// 8-bit grayscale PNG.
pub fn png_bytes(pixels: &[f32], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count must match the image size");
    let data: Vec<u8> = pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().expect("in-memory PNG header");
    writer.write_image_data(&data).expect("in-memory PNG data");
    writer.finish().expect("in-memory PNG trailer");
    out
}

/// [`png_bytes`] encoded as standard base64.
pub fn png_base64(pixels: &[f32], width: usize, height: usize) -> String {
    STANDARD.encode(png_bytes(pixels, width, height))
}
