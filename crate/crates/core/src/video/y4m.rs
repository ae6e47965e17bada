use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{CaptureClock, Frame, VideoError};

const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";
const MAX_LINE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    Mono,
    Yuv420,
}

/// Reads the luma plane of each frame of a YUV4MPEG2 stream.
pub struct Y4mReader<R = BufReader<File>> {
    path: PathBuf,
    reader: R,
    width: u32,
    height: u32,
    chroma_bytes: usize,
    next: u64,
    clock: CaptureClock,
    done: bool,
}

pub fn read_y4m(path: impl AsRef<Path>, clock: CaptureClock) -> Result<Y4mReader, VideoError> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|source| VideoError::Io {
        path: path.clone(),
        source,
    })?;
    Y4mReader::from_reader(BufReader::new(file), path, clock)
}

impl<R: BufRead> Y4mReader<R> {
    /// Parses the stream header; `path` is only used in error messages.
    pub fn from_reader(mut reader: R, path: PathBuf, clock: CaptureClock) -> Result<Self, VideoError> {
        let io_err = |source| VideoError::Io {
            path: path.clone(),
            source,
        };
        let line = match read_line(&mut reader).map_err(io_err)? {
            Line::Complete(line) => line,
            Line::Partial(line) if !line.starts_with(MAGIC) => return Err(VideoError::NotY4m),
            Line::Partial(_) => return Err(VideoError::Header("header not terminated by newline".into())),
            Line::Eof => return Err(VideoError::NotY4m),
        };
        if !line.starts_with(MAGIC) || !matches!(line.get(MAGIC.len()), None | Some(b' ')) {
            return Err(VideoError::NotY4m);
        }
        let header = std::str::from_utf8(&line[MAGIC.len()..])
            .map_err(|_| VideoError::Header("header is not ASCII".into()))?;

        let mut width = None;
        let mut height = None;
        let mut chroma = Chroma::Yuv420;
        for token in header.split(' ').filter(|t| !t.is_empty()) {
            let (tag, value) = token.split_at(1);
            match tag {
                "W" => width = Some(parse_dim("W", value)?),
                "H" => height = Some(parse_dim("H", value)?),
                "C" => {
                    chroma = match value {
                        "mono" => Chroma::Mono,
                        "420" | "420jpeg" | "420paldv" | "420mpeg2" => Chroma::Yuv420,
                        other => return Err(VideoError::Colorspace(other.to_string())),
                    }
                }
                // Frame rate, interlacing, aspect and extensions do not affect the luma plane.
                "F" | "I" | "A" | "X" => {}
                _ => return Err(VideoError::Header(format!("unknown parameter {token:?}"))),
            }
        }
        let width = width.ok_or_else(|| VideoError::Header("missing W parameter".into()))?;
        let height = height.ok_or_else(|| VideoError::Header("missing H parameter".into()))?;
        let chroma_bytes = match chroma {
            Chroma::Mono => 0,
            Chroma::Yuv420 => 2 * (width as usize).div_ceil(2) * (height as usize).div_ceil(2),
        };
        Ok(Self {
            path,
            reader,
            width,
            height,
            chroma_bytes,
            next: 0,
            clock,
            done: false,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn read_frame(&mut self) -> Result<Option<Frame>, VideoError> {
        let index = self.next;
        let io_err = |source| VideoError::Io {
            path: self.path.clone(),
            source,
        };
        let marker = match read_line(&mut self.reader).map_err(io_err)? {
            Line::Eof => return Ok(None),
            Line::Partial(_) => {
                return Err(VideoError::BadFrame {
                    frame_index: index,
                    reason: "truncated FRAME marker".into(),
                })
            }
            Line::Complete(line) => line,
        };
        if !marker.starts_with(FRAME_TAG) || !matches!(marker.get(FRAME_TAG.len()), None | Some(b' ')) {
            return Err(VideoError::BadFrame {
                frame_index: index,
                reason: "expected FRAME marker".into(),
            });
        }
        let luma_len = self.width as usize * self.height as usize;
        let mut luma = vec![0u8; luma_len];
        let got = read_fully(&mut self.reader, &mut luma).map_err(io_err)?;
        if got < luma_len {
            return Err(VideoError::Truncated {
                frame_index: index,
                expected: luma_len + self.chroma_bytes,
                got,
            });
        }
        let skipped = io::copy(
            &mut (&mut self.reader).take(self.chroma_bytes as u64),
            &mut io::sink(),
        )
        .map_err(io_err)? as usize;
        if skipped < self.chroma_bytes {
            return Err(VideoError::Truncated {
                frame_index: index,
                expected: luma_len + self.chroma_bytes,
                got: luma_len + skipped,
            });
        }
        self.next += 1;
        let stamp = self.clock.stamp(index);
        Frame::new(index, stamp, self.width, self.height, luma).map(Some)
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_frame() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes a `Cmono` stream at 30 fps.
pub fn write_y4m<'a, W: Write>(
    mut out: W,
    width: u32,
    height: u32,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> io::Result<()> {
    writeln!(out, "YUV4MPEG2 W{width} H{height} F30:1 Ip A1:1 Cmono")?;
    for frame in frames {
        if frame.width() != width || frame.height() != height {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!(
                    "frame {} is {}x{}, stream is {width}x{height}",
                    frame.frame_id,
                    frame.width(),
                    frame.height()
                ),
            ));
        }
        out.write_all(b"FRAME\n")?;
        out.write_all(frame.pixels())?;
    }
    out.flush()
}

fn parse_dim(tag: &str, value: &str) -> Result<u32, VideoError> {
    match value.parse::<u32>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(VideoError::Header(format!("invalid {tag} value {value:?}"))),
    }
}

enum Line {
    Complete(Vec<u8>),
    Partial(Vec<u8>),
    Eof,
}

/// Reads up to a newline, bounded by `MAX_LINE`.
fn read_line<R: BufRead>(reader: &mut R) -> io::Result<Line> {
    let mut line = Vec::new();
    let n = reader.take(MAX_LINE as u64).read_until(b'\n', &mut line)?;
    if n == 0 {
        return Ok(Line::Eof);
    }
    if line.last() == Some(&b'\n') {
        line.pop();
        Ok(Line::Complete(line))
    } else {
        Ok(Line::Partial(line))
    }
}

fn read_fully<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
