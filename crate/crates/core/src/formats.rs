//! File formats: datasets (`VXDS`), point clouds (ASCII XYZ and binary
//! `VXPC`), meshes (OFF and binary STL) and tab-separated reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::datagen::{Dataset, Split, TrainingPair, ViewSpec};
use crate::error::{Error, Result};
use crate::geom::camera::CameraPose;
use crate::geom::TriMesh;
use crate::grid::{EmbedTransform, OccupancyGrid, PointCloud, Vec3};

/// Write to a sibling temporary file, then rename over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Little-endian cursor that reports truncation as a format error.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, at: 0 }
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format("unexpected end of data"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n.checked_mul(8).ok_or_else(|| Error::format("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    /// Error unless every byte was consumed.
    pub fn finish(&self) -> Result<()> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(Error::format(format!("{} trailing bytes", self.buf.len() - self.at)))
        }
    }
}

fn put_vec3(buf: &mut Vec<u8>, v: &Vec3) {
    for c in v.iter() {
        buf.extend_from_slice(&c.to_le_bytes());
    }
}

/// Split a buffer into body and verified CRC32 trailer.
fn checked_body<'a>(bytes: &'a [u8], magic: &[u8; 4], what: &str) -> Result<&'a [u8]> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::format(format!("not a {what} file (bad magic)")));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
        return Err(Error::format(format!("{what} checksum mismatch")));
    }
    Ok(&body[4..])
}

// ---------------------------------------------------------------- datasets

pub const DATASET_MAGIC: &[u8; 4] = b"VXDS";
pub const DATASET_VERSION: u32 = 1;

/// Pack bits LSB-first.
fn pack_bits(bits: impl Iterator<Item = bool>, out: &mut Vec<u8>) {
    let mut byte = 0u8;
    let mut n = 0;
    for b in bits {
        if b {
            byte |= 1 << n;
        }
        n += 1;
        if n == 8 {
            out.push(byte);
            byte = 0;
            n = 0;
        }
    }
    if n > 0 {
        out.push(byte);
    }
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.manifest.len() != ds.pairs.len() {
        return Err(Error::invalid("manifest and pair counts differ"));
    }
    let side = ds.side;
    let vol = side * side * side;
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(side as u32).to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    for (v, p) in ds.manifest.iter().zip(&ds.pairs) {
        let id = v.mesh_id.as_bytes();
        if id.len() > u16::MAX as usize {
            return Err(Error::invalid("mesh id too long"));
        }
        buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&(v.view as u32).to_le_bytes());
        put_vec3(&mut buf, &v.pose.position);
        put_vec3(&mut buf, &Vec3::from(v.pose.orientation));
        buf.push(v.split.code());
        buf.extend_from_slice(&p.transform.scale.to_le_bytes());
        put_vec3(&mut buf, &p.transform.offset);
    }
    for p in &ds.pairs {
        if p.x.dims() != [side; 3] || p.y.dims() != [side; 3] {
            return Err(Error::invalid("pair grid dims do not match dataset side"));
        }
        let mut raw = Vec::with_capacity(2 * vol / 8 + 1);
        pack_bits(p.x.data().iter().chain(p.y.data()).copied(), &mut raw);
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw)?;
        let z = enc.finish()?;
        buf.extend_from_slice(&(z.len() as u32).to_le_bytes());
        buf.extend_from_slice(&z);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let body = checked_body(bytes, DATASET_MAGIC, "dataset")?;
    let mut r = ByteReader::new(body);
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let side = r.u32()? as usize;
    if side == 0 {
        return Err(Error::format("dataset grid side is zero"));
    }
    let n = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(n.min(1 << 20));
    let mut transforms = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = r.u16()? as usize;
        let mesh_id = String::from_utf8(r.bytes(len)?.to_vec()).map_err(|_| Error::format("mesh id is not UTF-8"))?;
        let view = r.u32()? as usize;
        let position = r.vec3()?;
        let o = r.vec3()?;
        let split = Split::from_code(r.u8()?).ok_or_else(|| Error::format("bad split code"))?;
        let scale = r.f64()?;
        let offset = r.vec3()?;
        if !(scale > 0.0) {
            return Err(Error::format("non-positive transform scale"));
        }
        manifest.push(ViewSpec {
            mesh_id,
            view,
            pose: CameraPose::new(position, o.x, o.y, o.z),
            split,
        });
        transforms.push(EmbedTransform { scale, offset });
    }
    let vol = side * side * side;
    let raw_len = (2 * vol).div_ceil(8);
    let mut pairs = Vec::with_capacity(n.min(1 << 20));
    for t in transforms {
        let zlen = r.u32()? as usize;
        let mut raw = Vec::with_capacity(raw_len);
        ZlibDecoder::new(r.bytes(zlen)?)
            .read_to_end(&mut raw)
            .map_err(|e| Error::format(format!("corrupt pair data: {e}")))?;
        if raw.len() != raw_len {
            return Err(Error::format(format!(
                "pair holds {} bytes, expected {raw_len}",
                raw.len()
            )));
        }
        let bits = unpack_bits(&raw, 2 * vol);
        let mut x = OccupancyGrid::in_transform([side; 3], &t);
        x.data_mut().copy_from_slice(&bits[..vol]);
        let mut y = OccupancyGrid::in_transform([side; 3], &t);
        y.data_mut().copy_from_slice(&bits[vol..]);
        pairs.push(TrainingPair { x, y, transform: t });
    }
    r.finish()?;
    Ok(Dataset { side, manifest, pairs })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    atomic_write(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}

// ------------------------------------------------------------------ clouds

pub const CLOUD_MAGIC: &[u8; 4] = b"VXPC";

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(Error::format(format!(
                "line {}: expected 3 values, found {}",
                i + 1,
                vals.len()
            )));
        }
        let mut p = [0.0; 3];
        for (k, v) in vals.iter().enumerate() {
            p[k] = v
                .parse::<f64>()
                .map_err(|_| Error::format(format!("line {}: '{v}' is not a number", i + 1)))?;
            if !p[k].is_finite() {
                return Err(Error::format(format!("line {}: non-finite value", i + 1)));
            }
        }
        pts.push(Vec3::from(p));
    }
    Ok(PointCloud::new(pts))
}

pub fn format_xyz(pc: &PointCloud) -> String {
    let mut s = String::new();
    for p in &pc.points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

/// `VXPC`, u64 point count, little-endian f32 triples.
pub fn encode_cloud(pc: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 12 * pc.len());
    buf.extend_from_slice(CLOUD_MAGIC);
    buf.extend_from_slice(&(pc.len() as u64).to_le_bytes());
    for p in &pc.points {
        for c in p.iter() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 12 || &bytes[..4] != CLOUD_MAGIC {
        return Err(Error::format("not a VXPC cloud (bad magic)"));
    }
    let mut r = ByteReader::new(&bytes[4..]);
    let n = r.u64()? as usize;
    if n.checked_mul(12) != Some(bytes.len() - 12) {
        return Err(Error::format(format!(
            "cloud declares {n} points but holds {} bytes of data",
            bytes.len() - 12
        )));
    }
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let p = Vec3::new(r.f32()? as f64, r.f32()? as f64, r.f32()? as f64);
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::format("non-finite point"));
        }
        pts.push(p);
    }
    Ok(PointCloud::new(pts))
}

/// Read a cloud, choosing the format from the leading magic bytes.
pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(CLOUD_MAGIC) {
        decode_cloud(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("cloud is neither VXPC nor text"))?;
        parse_xyz(text)
    }
}

pub fn save_cloud(path: &Path, pc: &PointCloud, binary: bool) -> Result<()> {
    if binary {
        atomic_write(path, &encode_cloud(pc))
    } else {
        atomic_write(path, format_xyz(pc).as_bytes())
    }
}

// ------------------------------------------------------------------ meshes

pub fn format_off(m: &TriMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", m.vertices.len(), m.triangles.len());
    for v in &m.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for t in &m.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// OFF reader; polygons with more than three corners are fanned.
pub fn parse_off(text: &str) -> Result<TriMesh> {
    let tokens: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .collect();
    let bad = |m: &str| Error::format(format!("OFF: {m}"));
    let mut it = tokens.into_iter();
    if it.next() != Some("OFF") {
        return Err(bad("missing OFF header"));
    }
    let mut counts = [0usize; 3];
    for (c, what) in counts.iter_mut().zip(["vertex count", "face count", "edge count"]) {
        *c = it
            .next()
            .ok_or_else(|| bad(&format!("missing {what}")))?
            .parse()
            .map_err(|_| bad(&format!("bad {what}")))?;
    }
    let [nv, nf, _] = counts;
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = it
                .next()
                .ok_or_else(|| bad(&format!("truncated vertex {i}")))?
                .parse()
                .map_err(|_| bad(&format!("bad coordinate in vertex {i}")))?;
        }
        vertices.push(Vec3::from(p));
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let k: usize = it
            .next()
            .ok_or_else(|| bad(&format!("truncated face {f}")))?
            .parse()
            .map_err(|_| bad(&format!("bad corner count in face {f}")))?;
        let mut idx = Vec::with_capacity(k);
        for _ in 0..k {
            idx.push(
                it.next()
                    .ok_or_else(|| bad(&format!("truncated face {f}")))?
                    .parse::<usize>()
                    .map_err(|_| bad(&format!("bad index in face {f}")))?,
            );
        }
        if k < 3 {
            return Err(bad(&format!("face {f} has {k} corners")));
        }
        for j in 1..k - 1 {
            triangles.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriMesh::new(vertices, triangles)
}

pub fn encode_stl(m: &TriMesh) -> Vec<u8> {
    let mut buf = vec![0u8; 80];
    buf[..9].copy_from_slice(b"voxc mesh");
    buf.extend_from_slice(&(m.triangles.len() as u32).to_le_bytes());
    for t in 0..m.triangles.len() {
        let c = m.corners(t);
        let n = (c[1] - c[0]).cross(&(c[2] - c[0]));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for v in std::iter::once(&n).chain(c.iter()) {
            for k in 0..3 {
                buf.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&[0, 0]);
    }
    buf
}

/// Binary STL reader; identical corner coordinates are welded.
pub fn decode_stl(bytes: &[u8]) -> Result<TriMesh> {
    if bytes.len() < 84 {
        return Err(Error::format("STL shorter than its header"));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * n {
        return Err(Error::format(format!(
            "STL declares {n} triangles but has {} bytes",
            bytes.len()
        )));
    }
    let mut r = ByteReader::new(&bytes[84..]);
    let mut index: HashMap<[u32; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(n);
    for _ in 0..n {
        r.bytes(12)?;
        let mut tri = [0usize; 3];
        for c in &mut tri {
            let p = [r.f32()?, r.f32()?, r.f32()?];
            let key = p.map(f32::to_bits);
            *c = *index.entry(key).or_insert_with(|| {
                vertices.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64));
                vertices.len() - 1
            });
        }
        r.bytes(2)?;
        if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
            triangles.push(tri);
        }
    }
    TriMesh::new(vertices, triangles)
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    match extension(path).as_str() {
        "off" => parse_off(&std::fs::read_to_string(path)?),
        "stl" => decode_stl(&std::fs::read(path)?),
        e => Err(Error::format(format!("unsupported mesh extension '{e}'"))),
    }
}

pub fn save_mesh(path: &Path, m: &TriMesh) -> Result<()> {
    match extension(path).as_str() {
        "stl" => atomic_write(path, &encode_stl(m)),
        _ => atomic_write(path, format_off(m).as_bytes()),
    }
}

// ----------------------------------------------------------------- reports

/// A header row plus data rows, rendered as tab-separated values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut s = self.header.join("\t");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        s
    }
}
