use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{CaptureClock, Frame, VideoError};
use crate::error::ConfigError;

/// Reads a headerless sequence of `width * height`-byte grayscale frames.
pub struct RawSequenceReader {
    path: PathBuf,
    reader: BufReader<File>,
    width: u32,
    height: u32,
    frames: u64,
    next: u64,
    clock: CaptureClock,
}

/// Opens a raw sequence. The file size must be a multiple of the frame size;
/// an empty file yields no frames.
pub fn read_raw_sequence(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    clock: CaptureClock,
) -> Result<RawSequenceReader, VideoError> {
    let path = path.as_ref().to_path_buf();
    if width == 0 || height == 0 {
        return Err(ConfigError::new("width/height", "frame dimensions must be >= 1").into());
    }
    let io_err = |source| VideoError::Io {
        path: path.clone(),
        source,
    };
    let file = File::open(&path).map_err(io_err)?;
    let len = file.metadata().map_err(io_err)?.len();
    let frame_bytes = width as u64 * height as u64;
    let residue = len % frame_bytes;
    if residue != 0 {
        return Err(VideoError::RawSize {
            path,
            len,
            frame_bytes,
            residue,
        });
    }
    Ok(RawSequenceReader {
        reader: BufReader::new(file),
        path,
        width,
        height,
        frames: len / frame_bytes,
        next: 0,
        clock,
    })
}

impl RawSequenceReader {
    pub fn frame_count(&self) -> u64 {
        self.frames
    }
}

impl Iterator for RawSequenceReader {
    type Item = Result<Frame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.frames {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let mut buf = vec![0u8; self.width as usize * self.height as usize];
        if let Err(source) = self.reader.read_exact(&mut buf) {
            // The file shrank underneath us.
            self.next = self.frames;
            return Some(Err(VideoError::Io {
                path: self.path.clone(),
                source,
            }));
        }
        let stamp = self.clock.stamp(index);
        Some(Frame::new(index, stamp, self.width, self.height, buf))
    }
}

/// Writes frames back to back with no header.
pub fn write_raw_sequence<'a, W: Write>(
    mut out: W,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> std::io::Result<()> {
    for frame in frames {
        out.write_all(frame.pixels())?;
    }
    out.flush()
}
