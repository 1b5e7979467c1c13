//! MetaImage reader/writer for the subset used by this project.
//!
//! Text header followed by a little-endian raw payload, either inline
//! (`ElementDataFile = LOCAL`) or in a sibling raw file. 3D files hold scalar
//! or label volumes; 4D files carry the class (or vector component) axis as
//! the 4th dimension.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{LabelMap, ProbabilityMap, ScalarVolume, VolumeDomain};
use crate::error::{CosegError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ElementType {
    U8,
    I16,
    F32,
}

impl ElementType {
    fn met_name(self) -> &'static str {
        match self {
            ElementType::U8 => "MET_UCHAR",
            ElementType::I16 => "MET_SHORT",
            ElementType::F32 => "MET_FLOAT",
        }
    }

    fn byte_size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::I16 => 2,
            ElementType::F32 => 4,
        }
    }

    fn parse(name: &str) -> Option<Self> {
        match name {
            "MET_UCHAR" => Some(ElementType::U8),
            "MET_SHORT" => Some(ElementType::I16),
            "MET_FLOAT" => Some(ElementType::F32),
            _ => None,
        }
    }
}

pub(crate) struct Header {
    pub ndims: usize,
    pub dim_size: Vec<usize>,
    pub spacing: Vec<f64>,
    pub offset: Vec<f64>,
    pub element_type: ElementType,
}

fn io_err(path: &Path, source: std::io::Error) -> CosegError {
    CosegError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, detail: impl Into<String>) -> CosegError {
    CosegError::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Parse the text header; returns the header and the payload bytes.
pub(crate) fn read_header_and_payload(path: &Path) -> Result<(Header, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;

    let mut ndims: Option<usize> = None;
    let mut dim_size: Option<Vec<usize>> = None;
    let mut spacing: Option<Vec<f64>> = None;
    let mut offset: Option<Vec<f64>> = None;
    let mut element_type: Option<ElementType> = None;
    let mut data_file: Option<String> = None;
    let mut object_type_seen = false;

    let mut pos = 0usize;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| pos + e)
            .unwrap_or(bytes.len());
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| format_err(path, "non-ASCII header line"))?
            .trim_end_matches('\r');
        pos = end + 1;

        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format_err(path, format!("malformed header line {line:?}")))?;

        match key {
            "ObjectType" => {
                if value != "Image" {
                    return Err(format_err(path, format!("ObjectType must be Image, got {value}")));
                }
                object_type_seen = true;
            }
            "NDims" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| format_err(path, format!("NDims not an integer: {value}")))?;
                if n != 3 && n != 4 {
                    return Err(format_err(path, format!("NDims must be 3 or 4, got {n}")));
                }
                ndims = Some(n);
            }
            "DimSize" => {
                let dims: std::result::Result<Vec<usize>, _> =
                    value.split_whitespace().map(str::parse).collect();
                let dims = dims.map_err(|_| format_err(path, "DimSize has non-integer entries"))?;
                if dims.iter().any(|&d| d == 0) {
                    return Err(format_err(path, "DimSize entries must be >= 1"));
                }
                dim_size = Some(dims);
            }
            "ElementSpacing" => {
                let s: std::result::Result<Vec<f64>, _> =
                    value.split_whitespace().map(str::parse).collect();
                let s = s.map_err(|_| format_err(path, "ElementSpacing has non-numeric entries"))?;
                if s.iter().any(|&v| !(v > 0.0)) {
                    return Err(format_err(path, "ElementSpacing entries must be > 0"));
                }
                spacing = Some(s);
            }
            "Offset" => {
                let o: std::result::Result<Vec<f64>, _> =
                    value.split_whitespace().map(str::parse).collect();
                offset = Some(o.map_err(|_| format_err(path, "Offset has non-numeric entries"))?);
            }
            "ElementType" => {
                element_type = Some(
                    ElementType::parse(value)
                        .ok_or_else(|| format_err(path, format!("unsupported ElementType {value}")))?,
                );
            }
            "ElementDataFile" => {
                data_file = Some(value.to_string());
                break; // payload (or nothing) follows
            }
            // Common optional keys: accept only the settings this subset
            // supports, reject contradictions.
            "BinaryData" => {
                if value != "True" {
                    return Err(format_err(path, "BinaryData must be True"));
                }
            }
            "CompressedData" => {
                if value != "False" {
                    return Err(format_err(path, "CompressedData must be False"));
                }
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => {
                if value != "False" {
                    return Err(format_err(path, format!("{key} must be False (little-endian)")));
                }
            }
            "ElementNumberOfChannels" => {
                if value != "1" {
                    return Err(format_err(path, "ElementNumberOfChannels must be 1"));
                }
            }
            _ => {} // ignore unknown keys
        }
    }

    if !object_type_seen {
        return Err(format_err(path, "missing key ObjectType"));
    }
    let ndims = ndims.ok_or_else(|| format_err(path, "missing key NDims"))?;
    let dim_size = dim_size.ok_or_else(|| format_err(path, "missing key DimSize"))?;
    let spacing = spacing.ok_or_else(|| format_err(path, "missing key ElementSpacing"))?;
    let offset = offset.ok_or_else(|| format_err(path, "missing key Offset"))?;
    let element_type = element_type.ok_or_else(|| format_err(path, "missing key ElementType"))?;
    let data_file = data_file.ok_or_else(|| format_err(path, "missing key ElementDataFile"))?;

    if dim_size.len() != ndims {
        return Err(format_err(path, "DimSize entry count does not match NDims"));
    }
    if spacing.len() != ndims {
        return Err(format_err(path, "ElementSpacing entry count does not match NDims"));
    }
    if offset.len() != ndims {
        return Err(format_err(path, "Offset entry count does not match NDims"));
    }

    let payload = if data_file == "LOCAL" {
        bytes[pos..].to_vec()
    } else {
        let raw_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&data_file);
        fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?
    };

    let expected = dim_size.iter().product::<usize>() * element_type.byte_size();
    if payload.len() != expected {
        return Err(CosegError::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }

    Ok((
        Header {
            ndims,
            dim_size,
            spacing,
            offset,
            element_type,
        },
        payload,
    ))
}

fn decode_f32(payload: &[u8], elem: ElementType) -> Vec<f32> {
    match elem {
        ElementType::U8 => payload.iter().map(|&b| b as f32).collect(),
        ElementType::I16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        ElementType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    }
}

fn domain_from_header(h: &Header) -> VolumeDomain {
    VolumeDomain::new(
        [h.dim_size[0], h.dim_size[1], h.dim_size[2]],
        [h.spacing[0], h.spacing[1], h.spacing[2]],
        [h.offset[0], h.offset[1], h.offset[2]],
    )
}

pub(crate) fn write_metaimage(
    path: &Path,
    dims: &[usize],
    spacing: &[f64],
    offset: &[f64],
    elem: ElementType,
    payload: &[u8],
) -> Result<()> {
    let join = |vals: &[String]| vals.join(" ");
    let mut header = String::new();
    header.push_str("ObjectType = Image\n");
    header.push_str(&format!("NDims = {}\n", dims.len()));
    header.push_str(&format!(
        "DimSize = {}\n",
        join(&dims.iter().map(|d| d.to_string()).collect::<Vec<_>>())
    ));
    header.push_str(&format!(
        "ElementSpacing = {}\n",
        join(&spacing.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    ));
    header.push_str(&format!(
        "Offset = {}\n",
        join(&offset.iter().map(|o| o.to_string()).collect::<Vec<_>>())
    ));
    header.push_str("BinaryData = True\n");
    header.push_str("BinaryDataByteOrderMSB = False\n");
    header.push_str("CompressedData = False\n");
    header.push_str(&format!("ElementType = {}\n", elem.met_name()));
    header.push_str("ElementDataFile = LOCAL\n");

    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
    file.write_all(payload).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// A volume loaded without a caller-imposed type: 4D files are probability
/// maps, 3D unsigned-byte files are label maps, anything else is scalar.
#[derive(Debug, Clone)]
pub enum LoadedVolume {
    Scalar(ScalarVolume),
    Labels(LabelMap),
    Probability(ProbabilityMap),
}

pub fn load_metaimage(path: &Path) -> Result<LoadedVolume> {
    let (header, payload) = read_header_and_payload(path)?;
    if header.ndims == 4 {
        return Ok(LoadedVolume::Probability(probability_from_parts(
            path, header, payload,
        )?));
    }
    match header.element_type {
        ElementType::U8 => Ok(LoadedVolume::Labels(LabelMap::new(
            domain_from_header(&header),
            payload,
        ))),
        _ => Ok(LoadedVolume::Scalar(ScalarVolume::new(
            domain_from_header(&header),
            decode_f32(&payload, header.element_type),
        ))),
    }
}

fn probability_from_parts(path: &Path, header: Header, payload: Vec<u8>) -> Result<ProbabilityMap> {
    if header.ndims != 4 {
        return Err(format_err(path, "probability maps require NDims = 4"));
    }
    let domain = domain_from_header(&header);
    let num_classes = header.dim_size[3];
    let mut prob = ProbabilityMap::new(domain, num_classes, decode_f32(&payload, header.element_type));
    prob.renormalize();
    Ok(prob)
}

impl ScalarVolume {
    pub fn load_metaimage(path: &Path) -> Result<Self> {
        let (header, payload) = read_header_and_payload(path)?;
        if header.ndims != 3 {
            return Err(format_err(path, "scalar volumes require NDims = 3"));
        }
        Ok(ScalarVolume::new(
            domain_from_header(&header),
            decode_f32(&payload, header.element_type),
        ))
    }

    pub fn save_metaimage(&self, path: &Path) -> Result<()> {
        let payload: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_metaimage(
            path,
            &self.domain.dims,
            &self.domain.spacing,
            &self.domain.origin,
            ElementType::F32,
            &payload,
        )
    }
}

impl LabelMap {
    pub fn load_metaimage(path: &Path) -> Result<Self> {
        let (header, payload) = read_header_and_payload(path)?;
        if header.ndims != 3 {
            return Err(format_err(path, "label maps require NDims = 3"));
        }
        let data = match header.element_type {
            ElementType::U8 => payload,
            ElementType::I16 => {
                let mut out = Vec::with_capacity(payload.len() / 2);
                for c in payload.chunks_exact(2) {
                    let v = i16::from_le_bytes([c[0], c[1]]);
                    if !(0..=255).contains(&v) {
                        return Err(format_err(path, format!("label value {v} out of range 0..=255")));
                    }
                    out.push(v as u8);
                }
                out
            }
            ElementType::F32 => {
                return Err(format_err(path, "label maps require an integer ElementType"));
            }
        };
        Ok(LabelMap::new(domain_from_header(&header), data))
    }

    pub fn save_metaimage(&self, path: &Path) -> Result<()> {
        write_metaimage(
            path,
            &self.domain.dims,
            &self.domain.spacing,
            &self.domain.origin,
            ElementType::U8,
            &self.data,
        )
    }
}

impl ProbabilityMap {
    pub fn load_metaimage(path: &Path) -> Result<Self> {
        let (header, payload) = read_header_and_payload(path)?;
        probability_from_parts(path, header, payload)
    }

    pub fn save_metaimage(&self, path: &Path) -> Result<()> {
        let payload: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let dims = [
            self.domain.dims[0],
            self.domain.dims[1],
            self.domain.dims[2],
            self.num_classes,
        ];
        let spacing = [
            self.domain.spacing[0],
            self.domain.spacing[1],
            self.domain.spacing[2],
            1.0,
        ];
        let offset = [
            self.domain.origin[0],
            self.domain.origin[1],
            self.domain.origin[2],
            0.0,
        ];
        write_metaimage(path, &dims, &spacing, &offset, ElementType::F32, &payload)
    }
}
