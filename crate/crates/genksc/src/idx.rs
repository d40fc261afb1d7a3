//! IDX containers: big-endian magic and extents followed by raw bytes.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use genksc_core::data::Dataset;
use genksc_core::Tensor;

use crate::FormatError;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Raw `n × h × w` unsigned bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

fn truncated(what: &str) -> FormatError {
    FormatError::Truncated(what.to_string())
}

fn read_header(r: &mut Cursor<&[u8]>, magic: u32, dims: usize, what: &str) -> Result<Vec<usize>, FormatError> {
    let found = r.read_u32::<BigEndian>().map_err(|_| truncated(what))?;
    if found != magic {
        return Err(FormatError::BadMagic { expected: magic, found });
    }
    (0..dims)
        .map(|_| r.read_u32::<BigEndian>().map(|d| d as usize).map_err(|_| truncated(what)))
        .collect()
}

fn read_body(r: &mut Cursor<&[u8]>, len: usize, what: &str) -> Result<Vec<u8>, FormatError> {
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|_| truncated(what))?;
    if r.position() as usize != r.get_ref().len() {
        return Err(FormatError::Invalid(format!("{what}: trailing bytes after {len} payload bytes")));
    }
    Ok(body)
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, FormatError> {
    let mut r = Cursor::new(bytes);
    let dims = read_header(&mut r, IMAGE_MAGIC, 3, "image file")?;
    let pixels = read_body(&mut r, dims[0] * dims[1] * dims[2], "image file")?;
    Ok(IdxImages {
        n: dims[0],
        height: dims[1],
        width: dims[2],
        pixels,
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, FormatError> {
    let mut r = Cursor::new(bytes);
    let dims = read_header(&mut r, LABEL_MAGIC, 1, "label file")?;
    read_body(&mut r, dims[0], "label file")
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.n as u32, images.height as u32, images.width as u32] {
        out.write_u32::<BigEndian>(v).expect("vec write");
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.write_u32::<BigEndian>(LABEL_MAGIC).expect("vec write");
    out.write_u32::<BigEndian>(labels.len() as u32).expect("vec write");
    out.extend_from_slice(labels);
    out
}

/// Images as `[n, 1, h, w]` scaled by 1/255.
pub fn images_to_tensor(images: &IdxImages) -> Tensor {
    let data = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Tensor::new(&[images.n, 1, images.height, images.width], data).expect("extents match payload")
}

fn read(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|e| FormatError::Io(format!("{}: {e}", path.display())))
}

/// Loads an image file and an optional label file into a dataset.
pub fn load_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset, FormatError> {
    let images = parse_images(&read(images_path)?)?;
    let labels = match labels_path {
        Some(p) => {
            let l = parse_labels(&read(p)?)?;
            if l.len() != images.n {
                return Err(FormatError::Invalid(format!("{} images but {} labels", images.n, l.len())));
            }
            Some(l.into_iter().map(usize::from).collect())
        }
        None => None,
    };
    let provenance = format!("idx {}", images_path.display());
    Ok(Dataset::new(images_to_tensor(&images), labels, provenance)?)
}
