//! Video tensors, pixel-range tags and the VTF binary tensor format.
//!
//! A [`VideoTensor`] stores `n·c·h·w` samples frame-major, then channel,
//! row and column. Latent frames produced by codecs may carry any channel
//! count and live in [`Frame`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VTF_MAGIC: &[u8; 4] = b"VXT1";
pub const VTF_HEADER_LEN: usize = 22;
const DTYPE_F32_LE: u8 = 1;

/// Declared value range of a pixel-domain tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelRange {
    /// Values nominally in `[0, 1]`.
    Unit,
    /// Values nominally in `[-1, 1]`.
    Symmetric,
}

impl PixelRange {
    pub fn tag(self) -> u8 {
        match self {
            PixelRange::Unit => 0,
            PixelRange::Symmetric => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(PixelRange::Unit),
            1 => Ok(PixelRange::Symmetric),
            other => Err(Error::Format(format!("unknown range tag {other}"))),
        }
    }

    /// Width of the nominal interval, used as the PSNR peak.
    pub fn peak(self) -> f64 {
        match self {
            PixelRange::Unit => 1.0,
            PixelRange::Symmetric => 2.0,
        }
    }
}

/// Shape of a whole video: frames, channels, rows, columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self) -> FrameShape {
        FrameShape::new(self.c, self.h, self.w)
    }

    pub fn frame_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn with_frames(&self, n: usize) -> Shape {
        Shape { n, ..*self }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Shape of a single frame (pixel or latent).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl FrameShape {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        FrameShape { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for FrameShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

/// One frame of samples with an arbitrary channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    shape: FrameShape,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(shape: FrameShape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "frame {shape} needs {} samples, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Frame { shape, data })
    }

    pub fn zeros(shape: FrameShape) -> Self {
        Frame {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Frame) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// `N×C×H×W` pixel-domain video with a declared range.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor {
    shape: Shape,
    range: PixelRange,
    data: Vec<f32>,
}

impl VideoTensor {
    pub fn new(shape: Shape, range: PixelRange, data: Vec<f32>) -> Result<Self> {
        validate_video_shape(shape)?;
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "video {shape} needs {} samples, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(VideoTensor { shape, range, data })
    }

    pub fn zeros(shape: Shape, range: PixelRange) -> Result<Self> {
        Self::new(shape, range, vec![0.0; shape.len()])
    }

    pub fn filled(shape: Shape, range: PixelRange, value: f32) -> Result<Self> {
        Self::new(shape, range, vec![value; shape.len()])
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every sample.
    pub fn from_fn(
        shape: Shape,
        range: PixelRange,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self::new(shape, range, data)
    }

    /// Rounds a 64-bit buffer to 32-bit samples.
    pub fn from_f64(shape: Shape, range: PixelRange, data: &[f64]) -> Result<Self> {
        Self::new(shape, range, data.iter().map(|&v| v as f32).collect())
    }

    pub fn from_frames(range: PixelRange, frames: &[Frame]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::shape("cannot build a video from zero frames"))?;
        let fs = first.shape();
        let mut data = Vec::with_capacity(fs.len() * frames.len());
        for frame in frames {
            if frame.shape() != fs {
                return Err(Error::shape(format!(
                    "frame shapes differ: {fs} vs {}",
                    frame.shape()
                )));
            }
            data.extend_from_slice(frame.data());
        }
        Self::new(Shape::new(frames.len(), fs.c, fs.h, fs.w), range, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn range(&self) -> PixelRange {
        self.range
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn frame_data(&self, index: usize) -> &[f32] {
        let len = self.shape.frame_len();
        &self.data[index * len..(index + 1) * len]
    }

    pub fn frame(&self, index: usize) -> Frame {
        Frame {
            shape: self.shape.frame(),
            data: self.frame_data(index).to_vec(),
        }
    }

    pub fn frames(&self) -> Vec<Frame> {
        (0..self.shape.n).map(|i| self.frame(i)).collect()
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        let s = self.shape;
        self.data[((n * s.c + c) * s.h + y) * s.w + x]
    }

    /// Re-tags the samples without touching them.
    pub fn with_range(mut self, range: PixelRange) -> Self {
        self.range = range;
        self
    }

    /// Affine map between `[0,1]` and `[-1,1]`; identity when `target` matches.
    pub fn convert_range(&self, target: PixelRange) -> VideoTensor {
        let data = match (self.range, target) {
            (PixelRange::Unit, PixelRange::Symmetric) => {
                self.data.iter().map(|&x| 2.0 * x - 1.0).collect()
            }
            (PixelRange::Symmetric, PixelRange::Unit) => {
                self.data.iter().map(|&x| (x + 1.0) / 2.0).collect()
            }
            _ => self.data.clone(),
        };
        VideoTensor {
            shape: self.shape,
            range: target,
            data,
        }
    }

    /// Bitwise equality of shape, range and samples.
    pub fn bit_eq(&self, other: &VideoTensor) -> bool {
        self.shape == other.shape
            && self.range == other.range
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn validate_video_shape(shape: Shape) -> Result<()> {
    if shape.n == 0 || shape.h == 0 || shape.w == 0 {
        return Err(Error::shape(format!("degenerate video shape {shape}")));
    }
    if shape.c != 1 && shape.c != 3 {
        return Err(Error::shape(format!(
            "video tensors carry 1 or 3 channels, got {}",
            shape.c
        )));
    }
    Ok(())
}

/// Writes the VTF header and payload, returning the byte count.
pub fn vtf_write<W: Write>(v: &VideoTensor, mut sink: W) -> Result<usize> {
    let s = v.shape();
    let mut header = [0u8; VTF_HEADER_LEN];
    header[..4].copy_from_slice(VTF_MAGIC);
    for (i, dim) in [s.n, s.c, s.h, s.w].into_iter().enumerate() {
        let dim = u32::try_from(dim).map_err(|_| Error::shape("dimension exceeds u32"))?;
        header[4 + 4 * i..8 + 4 * i].copy_from_slice(&dim.to_le_bytes());
    }
    header[20] = DTYPE_F32_LE;
    header[21] = v.range().tag();
    let mut out = Vec::with_capacity(VTF_HEADER_LEN + 4 * s.len());
    out.extend_from_slice(&header);
    for &x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    sink.write_all(&out)?;
    Ok(out.len())
}

/// Reads one VTF tensor from `source`.
pub fn vtf_read<R: Read>(mut source: R) -> Result<VideoTensor> {
    let mut header = [0u8; VTF_HEADER_LEN];
    read_exact_counted(&mut source, &mut header)?;
    if &header[..4] != VTF_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"VXT1\"",
            String::from_utf8_lossy(&header[..4])
        )));
    }
    let dim = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let shape = Shape::new(
        dim(0) as usize,
        dim(1) as usize,
        dim(2) as usize,
        dim(3) as usize,
    );
    if header[20] != DTYPE_F32_LE {
        return Err(Error::Format(format!("unsupported dtype {}", header[20])));
    }
    let range = PixelRange::from_tag(header[21])?;
    validate_video_shape(shape)?;
    let mut payload = vec![0u8; 4 * shape.len()];
    read_exact_counted(&mut source, &mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    VideoTensor::new(shape, range, data)
}

fn read_exact_counted<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Length {
                    expected: buf.len(),
                    got: filled,
                })
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn save_vtf(v: &VideoTensor, path: impl AsRef<Path>) -> Result<usize> {
    let mut out = BufWriter::new(File::create(path)?);
    let n = vtf_write(v, &mut out)?;
    out.flush()?;
    Ok(n)
}

pub fn load_vtf(path: impl AsRef<Path>) -> Result<VideoTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    vtf_read(BufReader::new(file))
}
