//! NIfTI-1 single-file (.nii) reader/writer.
//!
//! Scope: uncompressed little-endian files only, axis-aligned geometry only.
//! Scalar grids are written as 3-D float32, label masks as 3-D uint16, and
//! vector fields as 5-D float32 with `dim[5] = 3` and the vector intent code.
//! Files produced by [`write_nifti`] survive a read/write round trip
//! byte-for-byte.

use super::{Convention, GridGeometry, GridKind, LabelMask, ScalarGrid, VectorField};
use crate::error::{Error, Result};
use crate::real::Real;
use std::collections::BTreeMap;
use std::path::Path;

const HEADER_LEN: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

const INTENT_VECTOR: i16 = 1007;
const UNITS_MM: u8 = 2;

/// Any volume a NIfTI file can hold in this toolkit.
#[derive(Debug, Clone)]
pub enum NiftiVolume<T> {
    Scalar(ScalarGrid<T>),
    Labels(LabelMask<T>),
    Vector(VectorField<T>),
}

struct Header {
    dim: [i16; 8],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
    intent_code: i16,
    intent_name: [u8; 16],
}

fn rd_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

fn rd_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn rd_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_header(bytes: &[u8], path: &str) -> Result<Header> {
    if bytes.len() < VOX_OFFSET {
        return Err(Error::MalformedHeader {
            path: path.into(),
            reason: format!("file has {} bytes, need at least {VOX_OFFSET}", bytes.len()),
        });
    }
    let sizeof_hdr = rd_i32(bytes, 0);
    if sizeof_hdr != HEADER_LEN as i32 {
        let reason = if sizeof_hdr.swap_bytes() == HEADER_LEN as i32 {
            "big-endian files are not supported".to_string()
        } else {
            format!("sizeof_hdr = {sizeof_hdr}, expected {HEADER_LEN}")
        };
        return Err(Error::MalformedHeader { path: path.into(), reason });
    }
    if &bytes[344..348] != MAGIC {
        return Err(Error::MalformedHeader {
            path: path.into(),
            reason: format!("magic {:?} is not \"n+1\\0\"", &bytes[344..348]),
        });
    }
    let mut dim = [0i16; 8];
    let mut pixdim = [0f32; 8];
    for i in 0..8 {
        dim[i] = rd_i16(bytes, 40 + 2 * i);
        pixdim[i] = rd_f32(bytes, 76 + 4 * i);
    }
    let mut intent_name = [0u8; 16];
    intent_name.copy_from_slice(&bytes[328..344]);
    Ok(Header {
        dim,
        datatype: rd_i16(bytes, 70),
        pixdim,
        vox_offset: rd_f32(bytes, 108),
        scl_slope: rd_f32(bytes, 112),
        scl_inter: rd_f32(bytes, 116),
        qform_code: rd_i16(bytes, 252),
        sform_code: rd_i16(bytes, 254),
        quatern: [rd_f32(bytes, 256), rd_f32(bytes, 260), rd_f32(bytes, 264)],
        qoffset: [rd_f32(bytes, 268), rd_f32(bytes, 272), rd_f32(bytes, 276)],
        srow: [
            [rd_f32(bytes, 280), rd_f32(bytes, 284), rd_f32(bytes, 288), rd_f32(bytes, 292)],
            [rd_f32(bytes, 296), rd_f32(bytes, 300), rd_f32(bytes, 304), rd_f32(bytes, 308)],
            [rd_f32(bytes, 312), rd_f32(bytes, 316), rd_f32(bytes, 320), rd_f32(bytes, 324)],
        ],
        intent_code: rd_i16(bytes, 68),
        intent_name,
    })
}

/// Spacing and origin per NIfTI rules: sform when `sform_code > 0` (must be a
/// positive diagonal — anything oblique is rejected), then identity qform,
/// then raw pixdim.
fn geometry_from_header<T: Real>(h: &Header, path: &str) -> Result<GridGeometry<T>> {
    let dims = [h.dim[1] as usize, h.dim[2] as usize, h.dim[3] as usize];
    if h.dim[1] < 1 || h.dim[2] < 1 || h.dim[3] < 1 {
        return Err(Error::DimensionMismatch {
            path: path.into(),
            reason: format!("dim[1..3] = {:?} must all be >= 1", &h.dim[1..4]),
        });
    }
    let (spacing, origin): ([f32; 3], [f32; 3]) = if h.sform_code > 0 {
        let mut spacing = [0f32; 3];
        let mut origin = [0f32; 3];
        for r in 0..3 {
            for c in 0..3 {
                let v = h.srow[r][c];
                if r == c {
                    if v <= 0.0 {
                        return Err(Error::ObliqueGeometry { path: path.into() });
                    }
                    spacing[r] = v;
                } else if v.abs() > 1e-4 * h.srow[r][r].abs().max(1.0) {
                    return Err(Error::ObliqueGeometry { path: path.into() });
                }
            }
            origin[r] = h.srow[r][3];
        }
        (spacing, origin)
    } else if h.qform_code > 0 {
        if h.quatern.iter().any(|q| q.abs() > 1e-6) || h.pixdim[0] < 0.0 {
            return Err(Error::ObliqueGeometry { path: path.into() });
        }
        ([h.pixdim[1], h.pixdim[2], h.pixdim[3]], h.qoffset)
    } else {
        ([h.pixdim[1], h.pixdim[2], h.pixdim[3]], [0.0, 0.0, 0.0])
    };
    if spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::MalformedHeader {
            path: path.into(),
            reason: format!("non-positive spacing {spacing:?}"),
        });
    }
    Ok(GridGeometry::new(
        dims,
        [T::of(spacing[0] as f64), T::of(spacing[1] as f64), T::of(spacing[2] as f64)],
        [T::of(origin[0] as f64), T::of(origin[1] as f64), T::of(origin[2] as f64)],
    ))
}

fn bytes_per_sample(datatype: i16, path: &str) -> Result<usize> {
    match datatype {
        DT_UINT8 => Ok(1),
        DT_INT16 | DT_UINT16 => Ok(2),
        DT_INT32 | DT_FLOAT32 => Ok(4),
        DT_FLOAT64 => Ok(8),
        code => Err(Error::UnsupportedDatatype { path: path.into(), code }),
    }
}

fn decode_f64(data: &[u8], datatype: i16, i: usize) -> f64 {
    match datatype {
        DT_UINT8 => data[i] as f64,
        DT_INT16 => rd_i16(data, 2 * i) as f64,
        DT_UINT16 => u16::from_le_bytes([data[2 * i], data[2 * i + 1]]) as f64,
        DT_INT32 => rd_i32(data, 4 * i) as f64,
        DT_FLOAT32 => rd_f32(data, 4 * i) as f64,
        DT_FLOAT64 => f64::from_le_bytes(data[8 * i..8 * i + 8].try_into().unwrap()),
        _ => unreachable!("datatype validated on read"),
    }
}

fn intent_name_str(h: &Header) -> &str {
    let end = h.intent_name.iter().position(|&b| b == 0).unwrap_or(16);
    std::str::from_utf8(&h.intent_name[..end]).unwrap_or("")
}

struct RawFile {
    header: Header,
    data: Vec<u8>,
}

fn load(path: &Path) -> Result<RawFile> {
    let p = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&p, e))?;
    let header = parse_header(&bytes, &p)?;
    let off = header.vox_offset as usize;
    if (header.vox_offset as f64).fract() != 0.0 || off < HEADER_LEN || off > bytes.len() {
        return Err(Error::MalformedHeader {
            path: p,
            reason: format!("bad vox_offset {}", header.vox_offset),
        });
    }
    Ok(RawFile { header, data: bytes[off..].to_vec() })
}

fn check_payload(h: &Header, data: &[u8], n: usize, path: &str) -> Result<()> {
    let bps = bytes_per_sample(h.datatype, path)?;
    if data.len() < n * bps {
        return Err(Error::DimensionMismatch {
            path: path.into(),
            reason: format!("payload has {} bytes, expected {}", data.len(), n * bps),
        });
    }
    Ok(())
}

/// Read a file and classify it: 5-D vector data becomes a [`VectorField`],
/// integer data without intensity scaling a [`LabelMask`], everything else a
/// [`ScalarGrid`].
pub fn read_nifti<T: Real>(path: &Path) -> Result<NiftiVolume<T>> {
    let p = path.display().to_string();
    let raw = load(path)?;
    let h = &raw.header;
    if h.dim[0] == 5 {
        return Ok(NiftiVolume::Vector(vector_from_raw(&raw, &p, None)?));
    }
    if h.dim[0] != 3 {
        return Err(Error::DimensionMismatch {
            path: p,
            reason: format!("dim[0] = {}, expected 3 (or 5 for vector fields)", h.dim[0]),
        });
    }
    let scaled = h.scl_slope != 0.0 && (h.scl_slope != 1.0 || h.scl_inter != 0.0);
    let integer = matches!(h.datatype, DT_UINT8 | DT_INT16 | DT_UINT16 | DT_INT32);
    if integer && !scaled && intent_name_str(h) != "intensity" && intent_name_str(h) != "dose_gray" {
        Ok(NiftiVolume::Labels(labels_from_raw(&raw, &p)?))
    } else {
        Ok(NiftiVolume::Scalar(scalar_from_raw(&raw, &p)?))
    }
}

fn scalar_from_raw<T: Real>(raw: &RawFile, p: &str) -> Result<ScalarGrid<T>> {
    let h = &raw.header;
    let geom: GridGeometry<T> = geometry_from_header(h, p)?;
    let n = geom.len();
    check_payload(h, &raw.data, n, p)?;
    let (slope, inter) = if h.scl_slope != 0.0 && h.scl_slope.is_finite() {
        (h.scl_slope as f64, h.scl_inter as f64)
    } else {
        (1.0, 0.0)
    };
    let apply = slope != 1.0 || inter != 0.0;
    let values: Vec<T> = (0..n)
        .map(|i| {
            let v = decode_f64(&raw.data, h.datatype, i);
            T::of(if apply { v * slope + inter } else { v })
        })
        .collect();
    let kind = if intent_name_str(h) == "dose_gray" { GridKind::DoseGray } else { GridKind::Intensity };
    Ok(ScalarGrid::new(geom, values, kind))
}

fn labels_from_raw<T: Real>(raw: &RawFile, p: &str) -> Result<LabelMask<T>> {
    let h = &raw.header;
    if !matches!(h.datatype, DT_UINT8 | DT_INT16 | DT_UINT16 | DT_INT32) {
        return Err(Error::UnsupportedDatatype { path: p.into(), code: h.datatype });
    }
    let geom: GridGeometry<T> = geometry_from_header(h, p)?;
    let n = geom.len();
    check_payload(h, &raw.data, n, p)?;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let v = decode_f64(&raw.data, h.datatype, i);
        if v < 0.0 || v > u16::MAX as f64 || v.fract() != 0.0 {
            return Err(Error::DimensionMismatch {
                path: p.into(),
                reason: format!("label value {v} at sample {i} is not a small non-negative integer"),
            });
        }
        labels.push(v as u16);
    }
    // Names are not stored in NIfTI; synthesize stable placeholders.
    let mut names = BTreeMap::new();
    for &l in &labels {
        if l != 0 {
            names.entry(l).or_insert_with(|| format!("label_{l}"));
        }
    }
    Ok(LabelMask::new(geom, labels, names))
}

fn vector_from_raw<T: Real>(raw: &RawFile, p: &str, fallback: Option<Convention>) -> Result<VectorField<T>> {
    let h = &raw.header;
    if h.dim[0] != 5 || h.dim[5] != 3 {
        return Err(Error::DimensionMismatch {
            path: p.into(),
            reason: format!("vector field needs dim[0]=5, dim[5]=3; got dim = {:?}", h.dim),
        });
    }
    if h.dim[4] != 1 {
        return Err(Error::DimensionMismatch {
            path: p.into(),
            reason: format!("dim[4] = {} time points, expected 1", h.dim[4]),
        });
    }
    let geom: GridGeometry<T> = geometry_from_header(h, p)?;
    let n = geom.len();
    check_payload(h, &raw.data, 3 * n, p)?;
    let mut vectors = vec![[T::zero(); 3]; n];
    for comp in 0..3 {
        for i in 0..n {
            vectors[i][comp] = T::of(decode_f64(&raw.data, h.datatype, comp * n + i));
        }
    }
    let convention = match intent_name_str(h) {
        "dvf_push" => Convention::ForwardPush,
        "dvf_pull" => Convention::BackwardPull,
        _ => fallback.ok_or_else(|| Error::MalformedHeader {
            path: p.into(),
            reason: "vector field carries no push/pull tag; specify a convention".into(),
        })?,
    };
    Ok(VectorField::new(geom, vectors, convention))
}

/// Read a scalar grid, converting any supported datatype.
pub fn read_scalar<T: Real>(path: &Path) -> Result<ScalarGrid<T>> {
    let p = path.display().to_string();
    let raw = load(path)?;
    if raw.header.dim[0] != 3 {
        return Err(Error::DimensionMismatch {
            path: p,
            reason: format!("dim[0] = {}, expected 3", raw.header.dim[0]),
        });
    }
    scalar_from_raw(&raw, &p)
}

/// Read a label mask; the datatype must be integer.
pub fn read_labels<T: Real>(path: &Path) -> Result<LabelMask<T>> {
    let p = path.display().to_string();
    let raw = load(path)?;
    if raw.header.dim[0] != 3 {
        return Err(Error::DimensionMismatch {
            path: p,
            reason: format!("dim[0] = {}, expected 3", raw.header.dim[0]),
        });
    }
    labels_from_raw(&raw, &p)
}

/// Read a 5-D displacement field. Files written by this crate carry their
/// push/pull tag; untagged foreign files take `fallback`.
pub fn read_vector_field<T: Real>(path: &Path, fallback: Convention) -> Result<VectorField<T>> {
    let p = path.display().to_string();
    let raw = load(path)?;
    vector_from_raw(&raw, &p, Some(fallback))
}

fn wr_i16(b: &mut [u8], at: usize, v: i16) {
    b[at..at + 2].copy_from_slice(&v.to_le_bytes());
}

fn wr_i32(b: &mut [u8], at: usize, v: i32) {
    b[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

fn wr_f32(b: &mut [u8], at: usize, v: f32) {
    b[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

fn header_bytes<T: Real>(
    geom: &GridGeometry<T>,
    ndim: i16,
    ncomp: i16,
    datatype: i16,
    bitpix: i16,
    intent_code: i16,
    intent_name: &str,
) -> Vec<u8> {
    let mut b = vec![0u8; VOX_OFFSET];
    wr_i32(&mut b, 0, HEADER_LEN as i32);
    let dim: [i16; 8] = [
        ndim,
        geom.dims[0] as i16,
        geom.dims[1] as i16,
        geom.dims[2] as i16,
        1,
        ncomp,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        wr_i16(&mut b, 40 + 2 * i, *d);
    }
    wr_i16(&mut b, 68, intent_code);
    wr_i16(&mut b, 70, datatype);
    wr_i16(&mut b, 72, bitpix);
    let sp = [
        geom.spacing[0].as_f64() as f32,
        geom.spacing[1].as_f64() as f32,
        geom.spacing[2].as_f64() as f32,
    ];
    let pixdim: [f32; 8] = [1.0, sp[0], sp[1], sp[2], 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        wr_f32(&mut b, 76 + 4 * i, *p);
    }
    wr_f32(&mut b, 108, VOX_OFFSET as f32);
    b[123] = UNITS_MM;
    wr_i16(&mut b, 254, 1); // sform_code
    let og = [
        geom.origin[0].as_f64() as f32,
        geom.origin[1].as_f64() as f32,
        geom.origin[2].as_f64() as f32,
    ];
    for r in 0..3 {
        let base = 280 + 16 * r;
        wr_f32(&mut b, base + 4 * r, sp[r]);
        wr_f32(&mut b, base + 12, og[r]);
    }
    let name = intent_name.as_bytes();
    b[328..328 + name.len().min(15)].copy_from_slice(&name[..name.len().min(15)]);
    b[344..348].copy_from_slice(MAGIC);
    // bytes 348..352 stay zero: empty extension flag
    b
}

/// Reference to any writable volume; `write_nifti(&grid, path)` works for all
/// three grid types through `Into`.
pub enum NiftiRef<'a, T> {
    Scalar(&'a ScalarGrid<T>),
    Labels(&'a LabelMask<T>),
    Vector(&'a VectorField<T>),
}

impl<'a, T> From<&'a ScalarGrid<T>> for NiftiRef<'a, T> {
    fn from(g: &'a ScalarGrid<T>) -> Self {
        NiftiRef::Scalar(g)
    }
}

impl<'a, T> From<&'a LabelMask<T>> for NiftiRef<'a, T> {
    fn from(g: &'a LabelMask<T>) -> Self {
        NiftiRef::Labels(g)
    }
}

impl<'a, T> From<&'a VectorField<T>> for NiftiRef<'a, T> {
    fn from(g: &'a VectorField<T>) -> Self {
        NiftiRef::Vector(g)
    }
}

/// Write a volume as uncompressed NIfTI-1. Scalars store float32 (kind kept
/// in `intent_name`), labels uint16, vector fields 5-D float32 tagged with
/// their convention.
pub fn write_nifti<'a, T: Real>(vol: impl Into<NiftiRef<'a, T>>, path: &Path) -> Result<()> {
    let p = path.display().to_string();
    let bytes = match vol.into() {
        NiftiRef::Scalar(g) => {
            let name = match g.kind {
                GridKind::Intensity => "intensity",
                GridKind::DoseGray => "dose_gray",
            };
            let mut b = header_bytes(&g.geometry, 3, 1, DT_FLOAT32, 32, 0, name);
            b.reserve(4 * g.values.len());
            for v in &g.values {
                b.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
            b
        }
        NiftiRef::Labels(m) => {
            let mut b = header_bytes(&m.geometry, 3, 1, DT_UINT16, 16, 0, "labels");
            b.reserve(2 * m.labels.len());
            for l in &m.labels {
                b.extend_from_slice(&l.to_le_bytes());
            }
            b
        }
        NiftiRef::Vector(f) => {
            let name = match f.convention {
                Convention::ForwardPush => "dvf_push",
                Convention::BackwardPull => "dvf_pull",
            };
            let mut b = header_bytes(&f.geometry, 5, 3, DT_FLOAT32, 32, INTENT_VECTOR, name);
            b.reserve(12 * f.vectors.len());
            for comp in 0..3 {
                for v in &f.vectors {
                    b.extend_from_slice(&(v[comp].as_f64() as f32).to_le_bytes());
                }
            }
            b
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(&p, e))
}
