//! Frame directories: `frame_000001.png`, `frame_000002.png`, ...

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use super::atomic::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::morphing::FrameSequence;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{:06}.png", index + 1)
}

fn parse_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().filter(|&n| n > 0)
}

/// Loads every numbered frame; numbering must run from 1 without gaps.
pub fn load_frames(dir: &Path) -> Result<FrameSequence> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(i) = entry.file_name().to_str().and_then(parse_index) {
            indices.push(i);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(Error::format(dir, "no frame_NNNNNN.png files"));
    }
    if let Some(missing) = (1..=indices.len()).zip(&indices).find(|(want, got)| want != *got) {
        return Err(Error::format(
            dir,
            format!("missing {}", frame_file_name(missing.0 - 1)),
        ));
    }
    let frames = (0..indices.len())
        .map(|i| {
            let path = dir.join(frame_file_name(i));
            let bytes = read_bytes(&path)?;
            image::load_from_memory_with_format(&bytes, ImageFormat::Png)
                .map(|img| img.to_rgb8())
                .map_err(|e| Error::format(&path, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames)
}

pub fn encode_png(frame: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    frame
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(buf.into_inner())
}

/// Writes each frame atomically; returns the written file names in order.
pub fn save_frames(dir: &Path, frames: &FrameSequence) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let name = frame_file_name(i);
            write_atomic(&dir.join(&name), &encode_png(f)?)?;
            Ok(name)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn round_trip_and_gap_detection() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<_> = (0..3u8)
            .map(|k| RgbImage::from_fn(5, 4, |x, y| Rgb([k, x as u8, y as u8])))
            .collect();
        let seq = FrameSequence::new(frames).unwrap();
        let names = save_frames(dir.path(), &seq).unwrap();
        assert_eq!(names[0], "frame_000001.png");
        assert_eq!(load_frames(dir.path()).unwrap(), seq);

        std::fs::remove_file(dir.path().join("frame_000002.png")).unwrap();
        let err = load_frames(dir.path()).unwrap_err();
        assert!(err.to_string().contains("frame_000002.png"));
    }

    #[test]
    fn parse_rejects_foreign_names() {
        assert_eq!(parse_index("frame_000010.png"), Some(10));
        assert_eq!(parse_index("frame_10.png"), None);
        assert_eq!(parse_index("frame_000000.png"), None);
        assert_eq!(parse_index("other.png"), None);
    }
}
