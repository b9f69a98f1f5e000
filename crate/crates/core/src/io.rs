//! Mesh, point, and density readers; OBJ/XYZ writers; JSON run reports.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::apps::DualMesh;
use crate::error::{Error, Result};
use crate::geometry::{Triangle, Vec3};
use crate::laguerre::RestrictedLaguerreDiagram;
use crate::measures::{SimplexSoup, SiteSet};
use crate::solver::SolveReport;

pub const REPORT_SCHEMA: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// A parsed mesh plus anything worth telling the user about it.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub soup: SimplexSoup,
    pub warnings: Vec<String>,
}

/// Reads an OFF or OBJ file (by extension, falling back to the header).
/// Polygons are fan-triangulated; zero-area faces are dropped. Both emit a
/// warning.
pub fn load_mesh(path: &Path, density: Option<&Path>) -> Result<LoadedMesh> {
    let text = read_text(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let is_off = match ext.as_deref() {
        Some("off") => true,
        Some("obj") => false,
        _ => text.trim_start().starts_with("OFF"),
    };
    let (positions, polygons) = if is_off {
        parse_off(path, &text)?
    } else {
        parse_obj(path, &text)?
    };
    if polygons.is_empty() {
        return Err(Error::Validation(format!("{}: mesh has no faces", path.display())));
    }
    let mut warnings = Vec::new();
    let mut triangles = Vec::with_capacity(polygons.len());
    let mut fanned = 0;
    let mut dropped = 0;
    let diag = crate::geometry::Aabb::from_points(&positions).diagonal();
    let eps = crate::measures::REL_EPS_GEOM * diag;
    for (line, poly) in &polygons {
        if poly.len() < 3 {
            return Err(parse_err(path, *line, "face with fewer than three vertices"));
        }
        if let Some(&bad) = poly.iter().find(|&&i| i >= positions.len()) {
            return Err(parse_err(path, *line, format!("vertex index {bad} out of range")));
        }
        if poly.len() > 3 {
            fanned += 1;
        }
        for k in 1..poly.len() - 1 {
            let t = [poly[0], poly[k], poly[k + 1]];
            let g = Triangle::new(positions[t[0]], positions[t[1]], positions[t[2]]);
            if g.is_degenerate() || g.area() <= eps * eps {
                dropped += 1;
                continue;
            }
            triangles.push(t);
        }
    }
    if fanned > 0 {
        warnings.push(format!("{}: {fanned} polygons with more than three sides were fan-triangulated", path.display()));
    }
    if dropped > 0 {
        warnings.push(format!("{}: {dropped} degenerate triangles dropped", path.display()));
    }
    if triangles.is_empty() {
        return Err(Error::Validation(format!("{}: every face is degenerate", path.display())));
    }
    let density = match density {
        Some(p) => Some(load_density(p, positions.len())?),
        None => None,
    };
    let soup = SimplexSoup::new(positions, triangles, density).map_err(|e| e.with_context(path.display().to_string()))?;
    warnings.extend(soup.warnings().iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LoadedMesh { soup, warnings })
}

type Polygons = Vec<(usize, Vec<usize>)>;

/// Meaningful lines with 1-based numbers, comments stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("expected a number, found {tok:?}")))
}

fn parse_usize(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("expected an index, found {tok:?}")))
}

fn parse_off(path: &Path, text: &str) -> Result<(Vec<Vec3>, Polygons)> {
    let mut lines = content_lines(text);
    let last_line = text.lines().count().max(1);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(path, hl, "missing OFF header"))?
        .trim();
    let (cl, counts) = if rest.is_empty() {
        lines.next().ok_or_else(|| parse_err(path, last_line, "missing element counts"))?
    } else {
        (hl, rest)
    };
    let counts: Vec<&str> = counts.split_whitespace().collect();
    if counts.len() < 2 {
        return Err(parse_err(path, cl, "expected vertex and face counts"));
    }
    let nv = parse_usize(path, cl, counts[0])?;
    let nf = parse_usize(path, cl, counts[1])?;
    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_err(path, last_line, format!("file ends after {} of {nv} vertices", positions.len())))?;
        let t: Vec<&str> = s.split_whitespace().collect();
        if t.len() < 3 {
            return Err(parse_err(path, l, "vertex needs three coordinates"));
        }
        positions.push(Vec3::new(parse_f64(path, l, t[0])?, parse_f64(path, l, t[1])?, parse_f64(path, l, t[2])?));
    }
    let mut polygons = Vec::with_capacity(nf);
    for f in 0..nf {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_err(path, last_line, format!("file ends after {f} of {nf} faces")))?;
        let t: Vec<&str> = s.split_whitespace().collect();
        let k = parse_usize(path, l, t[0])?;
        if t.len() < k + 1 {
            return Err(parse_err(path, l, format!("face announces {k} vertices but lists {}", t.len() - 1)));
        }
        let idx = t[1..=k].iter().map(|x| parse_usize(path, l, x)).collect::<Result<Vec<_>>>()?;
        polygons.push((l, idx));
    }
    Ok((positions, polygons))
}

fn parse_obj(path: &Path, text: &str) -> Result<(Vec<Vec3>, Polygons)> {
    let mut positions = Vec::new();
    let mut polygons = Vec::new();
    for (l, s) in content_lines(text) {
        let mut t = s.split_whitespace();
        match t.next() {
            Some("v") => {
                let c: Vec<&str> = t.collect();
                if c.len() < 3 {
                    return Err(parse_err(path, l, "vertex needs three coordinates"));
                }
                positions.push(Vec3::new(parse_f64(path, l, c[0])?, parse_f64(path, l, c[1])?, parse_f64(path, l, c[2])?));
            }
            Some("f") => {
                let idx = t
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let v: i64 = head
                            .parse()
                            .map_err(|_| parse_err(path, l, format!("bad face index {tok:?}")))?;
                        let resolved = match v {
                            v if v > 0 => v - 1,
                            v if v < 0 => positions.len() as i64 + v,
                            _ => -1,
                        };
                        usize::try_from(resolved).map_err(|_| parse_err(path, l, format!("face index {v} out of range")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                polygons.push((l, idx));
            }
            _ => {}
        }
    }
    Ok((positions, polygons))
}

/// One density value per vertex; commas, whitespace and an optional
/// non-numeric header line are accepted.
pub fn load_density(path: &Path, vertex_count: usize) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut values = Vec::with_capacity(vertex_count);
    for (l, s) in content_lines(&text) {
        for tok in s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            match tok.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if values.is_empty() && l == content_lines(&text).next().map_or(0, |x| x.0) => break,
                Err(_) => return Err(parse_err(path, l, format!("expected a density value, found {tok:?}"))),
            }
        }
    }
    if values.len() != vertex_count {
        return Err(Error::Validation(format!(
            "{}: {} density values for {vertex_count} vertices",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}

/// Reads XYZ (3 or 4 columns, the fourth being the target mass) or PLY.
/// Masses are normalized; the solver rescales them to `μ(K)`.
pub fn load_points(path: &Path) -> Result<SiteSet> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (positions, masses) = if bytes.starts_with(b"ply") {
        parse_ply(path, &bytes)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| parse_err(path, 1, "not UTF-8 text"))?;
        parse_xyz(path, &text)?
    };
    let n = positions.len();
    SiteSet::new(positions, masses.unwrap_or_else(|| vec![1.0; n])).map_err(|e| e.with_context(path.display().to_string()))
}

fn parse_xyz(path: &Path, text: &str) -> Result<(Vec<Vec3>, Option<Vec<f64>>)> {
    let mut positions = Vec::new();
    let mut masses = Vec::new();
    let mut columns = None;
    for (l, s) in content_lines(text) {
        let t: Vec<f64> = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|tok| parse_f64(path, l, tok))
            .collect::<Result<_>>()?;
        if t.len() != 3 && t.len() != 4 {
            return Err(parse_err(path, l, format!("expected 3 or 4 columns, found {}", t.len())));
        }
        match columns {
            None => columns = Some(t.len()),
            Some(c) if c != t.len() => {
                return Err(parse_err(path, l, format!("expected {c} columns like the first row, found {}", t.len())))
            }
            _ => {}
        }
        positions.push(Vec3::new(t[0], t[1], t[2]));
        if t.len() == 4 {
            masses.push(t[3]);
        }
    }
    if positions.is_empty() {
        return Err(Error::Validation(format!("{}: no points", path.display())));
    }
    Ok((positions, (columns == Some(4)).then_some(masses)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

fn ply_type_size(ty: &str) -> Option<usize> {
    Some(match ty {
        "char" | "uchar" | "int8" | "uint8" => 1,
        "short" | "ushort" | "int16" | "uint16" => 2,
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => 4,
        "double" | "float64" => 8,
        _ => return None,
    })
}

fn ply_read_le(ty: &str, b: &[u8]) -> f64 {
    match ty {
        "char" | "int8" => b[0] as i8 as f64,
        "uchar" | "uint8" => b[0] as f64,
        "short" | "int16" => i16::from_le_bytes([b[0], b[1]]) as f64,
        "ushort" | "uint16" => u16::from_le_bytes([b[0], b[1]]) as f64,
        "int" | "int32" => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        "uint" | "uint32" => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        "float" | "float32" => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
        _ => f64::from_le_bytes(b[..8].try_into().unwrap()),
    }
}

/// PLY vertices (`x`, `y`, `z`, optional `nu` or `mass`). The vertex element
/// must come first.
fn parse_ply(path: &Path, bytes: &[u8]) -> Result<(Vec<Vec3>, Option<Vec<f64>>)> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut count = None;
    let mut props: Vec<(String, String)> = Vec::new();
    let mut in_vertex = false;
    let mut seen_element = false;
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(path, line_no + 1, "unterminated PLY header"))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| parse_err(path, line_no + 1, "header is not text"))?
            .trim();
        offset += end + 1;
        line_no += 1;
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.first().copied() {
            Some("end_header") => break,
            Some("format") => {
                format = Some(match t.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    other => return Err(parse_err(path, line_no, format!("unsupported PLY format {other:?}"))),
                })
            }
            Some("element") => {
                in_vertex = t.get(1) == Some(&"vertex");
                if in_vertex {
                    if seen_element {
                        return Err(parse_err(path, line_no, "vertex element must come first"));
                    }
                    count = Some(parse_usize(path, line_no, t.get(2).copied().unwrap_or(""))?);
                }
                seen_element = true;
            }
            Some("property") if in_vertex => {
                if t.get(1) == Some(&"list") {
                    return Err(parse_err(path, line_no, "list properties on vertices are not supported"));
                }
                let (ty, name) = (t.get(1).copied().unwrap_or(""), t.get(2).copied().unwrap_or(""));
                if ply_type_size(ty).is_none() {
                    return Err(parse_err(path, line_no, format!("unknown property type {ty:?}")));
                }
                props.push((ty.to_string(), name.to_string()));
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| parse_err(path, line_no, "missing format line"))?;
    let n = count.ok_or_else(|| parse_err(path, line_no, "missing vertex element"))?;
    let find = |name: &str| props.iter().position(|p| p.1 == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, line_no, "vertex element lacks x, y or z")),
    };
    let imass = find("nu").or_else(|| find("mass"));
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(&bytes[offset..]).map_err(|_| parse_err(path, line_no + 1, "body is not text"))?;
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for _ in 0..n {
                let (i, l) = lines
                    .next()
                    .ok_or_else(|| parse_err(path, line_no + 1, format!("file ends after {} of {n} vertices", rows.len())))?;
                let ln = line_no + 1 + i;
                let row: Vec<f64> = l.split_whitespace().map(|t| parse_f64(path, ln, t)).collect::<Result<_>>()?;
                if row.len() < props.len() {
                    return Err(parse_err(path, ln, "too few vertex properties"));
                }
                rows.push(row);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = props.iter().map(|p| ply_type_size(&p.0).unwrap()).sum();
            if bytes.len() < offset + stride * n {
                return Err(parse_err(path, line_no, "binary body is truncated"));
            }
            for v in 0..n {
                let mut at = offset + v * stride;
                let row = props
                    .iter()
                    .map(|(ty, _)| {
                        let s = ply_type_size(ty).unwrap();
                        let x = ply_read_le(ty, &bytes[at..at + s]);
                        at += s;
                        x
                    })
                    .collect();
                rows.push(row);
            }
        }
    }
    let positions = rows.iter().map(|r| Vec3::new(r[ix], r[iy], r[iz])).collect();
    let masses = imass.map(|m| rows.iter().map(|r| r[m]).collect());
    Ok((positions, masses))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

fn write_v(w: &mut impl Write, p: Vec3) -> std::io::Result<()> {
    // `{}` prints the shortest string that parses back to the same f64
    writeln!(w, "v {} {} {}", p.x, p.y, p.z)
}

/// One OBJ group `cell_<i>` per site; pieces in triangle order, fan-triangulated.
/// Fan triangles too thin to survive re-import are skipped.
pub fn export_cells(diagram: &RestrictedLaguerreDiagram, path: &Path) -> Result<()> {
    let mut by_site: Vec<Vec<&crate::laguerre::CellPiece>> = vec![Vec::new(); diagram.num_sites()];
    for p in diagram.all_pieces() {
        by_site[p.site].push(p);
    }
    let mut w = create(path)?;
    let mut run = || -> std::io::Result<()> {
        let mut next = 1usize;
        for (i, pieces) in by_site.iter().enumerate() {
            if pieces.is_empty() {
                continue;
            }
            writeln!(w, "g cell_{i}")?;
            for piece in pieces {
                let base = next;
                for v in &piece.polygon.vertices {
                    write_v(&mut w, *v)?;
                }
                next += piece.polygon.len();
                let vs = &piece.polygon.vertices;
                for k in 1..vs.len() - 1 {
                    if Triangle::new(vs[0], vs[k], vs[k + 1]).is_degenerate() {
                        continue;
                    }
                    writeln!(w, "f {} {} {}", base, base + k, base + k + 1)?;
                }
            }
        }
        w.flush()
    };
    run().map_err(io_err(path))
}

pub fn write_points(path: &Path, sites: &SiteSet) -> Result<()> {
    let mut w = create(path)?;
    let mut run = || -> std::io::Result<()> {
        for (p, m) in sites.positions().iter().zip(sites.masses()) {
            writeln!(w, "{} {} {} {}", p.x, p.y, p.z, m)?;
        }
        w.flush()
    };
    run().map_err(io_err(path))
}

pub fn write_dual_mesh(path: &Path, mesh: &DualMesh) -> Result<()> {
    let mut w = create(path)?;
    let mut run = || -> std::io::Result<()> {
        for v in &mesh.vertices {
            write_v(&mut w, *v)?;
        }
        for f in &mesh.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()
    };
    run().map_err(io_err(path))
}

/// Summary of an input mesh and point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub vertices: usize,
    pub triangles: usize,
    pub bbox_min: Vec3,
    pub bbox_max: Vec3,
    pub total_mass: f64,
    pub sites: Option<usize>,
}

impl InputDigest {
    pub fn new(soup: &SimplexSoup, sites: Option<&SiteSet>) -> Self {
        let b = soup.bounds();
        InputDigest {
            vertices: soup.positions().len(),
            triangles: soup.len(),
            bbox_min: b.min,
            bbox_max: b.max,
            total_mass: soup.total_mass(),
            sites: sites.map(SiteSet::len),
        }
    }
}

/// Everything one CLI invocation did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Option<InputDigest>,
    pub solves: Vec<SolveReport>,
    /// Command-specific results (weights, costs, transform, ...).
    pub result: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: serde_json::Value) -> Self {
        RunReport {
            schema: REPORT_SCHEMA,
            command: command.into(),
            config,
            inputs: None,
            solves: Vec::new(),
            result: serde_json::Value::Null,
            outputs: Vec::new(),
            warnings: Vec::new(),
            error: None,
            wall_time_s: 0.0,
        }
    }

    /// Adds a warning once.
    pub fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    /// Pulls solve-level warnings up so the top-level list is complete.
    pub fn collect_warnings(&mut self) {
        let all: Vec<String> = self.solves.iter().flat_map(|s| s.warnings.iter().cloned()).collect();
        for w in all {
            self.warn(w);
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    let mut run = || -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()
    };
    run().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laguerre::compute_diagram;

    fn write(dir: &Path, name: &str, body: &[u8]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn off_square() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "sq.off", b"OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n");
        let m = load_mesh(&p, None).unwrap();
        assert_eq!(m.soup.len(), 2);
        assert!((m.soup.normalize().unwrap().total_mass() - 1.0).abs() < 1e-15);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn obj_quads_are_fanned() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "q.obj", b"# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n");
        let m = load_mesh(&p, None).unwrap();
        assert_eq!(m.soup.len(), 2);
        assert!(m.warnings.iter().any(|w| w.contains("fan-triangulated")));
        assert!((m.soup.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_off_names_the_line() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "t.off", b"OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n");
        match load_mesh(&p, None) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("3 of 4"));
            }
            other => panic!("{other:?}"),
        }
        let p = write(d.path(), "b.off", b"OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n");
        assert!(matches!(load_mesh(&p, None), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn density_sidecar() {
        let d = tempfile::tempdir().unwrap();
        let m = write(d.path(), "sq.off", b"OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n");
        let c = write(d.path(), "rho.csv", b"density\n1\n2\n2\n1\n");
        let soup = load_mesh(&m, Some(&c)).unwrap().soup;
        assert!((soup.total_mass() - 1.5).abs() < 1e-14);
        let bad = write(d.path(), "short.csv", b"1\n2\n");
        assert!(load_mesh(&m, Some(&bad)).unwrap_err().is_validation());
    }

    #[test]
    fn xyz_points() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.xyz", b"0.25 0.5 0\n0.75 0.5 0\n");
        assert_eq!(load_points(&p).unwrap().masses(), &[0.5, 0.5]);
        let p = write(d.path(), "b.xyz", b"0.25 0.5 0 3\n0.75 0.5 0 1\n");
        assert_eq!(load_points(&p).unwrap().masses(), &[0.75, 0.25]);
        let p = write(d.path(), "c.xyz", b"0.25 0.5 0\n0.25 0.5 0\n");
        assert!(load_points(&p).unwrap_err().is_validation());
        let p = write(d.path(), "d.xyz", b"0.25 0.5 0\n0.75 0.5\n");
        assert!(matches!(load_points(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn ply_ascii_and_binary() {
        let d = tempfile::tempdir().unwrap();
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty double nu\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n0.25 0.5 0 3\n0.75 0.5 0 1\n";
        let p = write(d.path(), "a.ply", ascii);
        let s = load_points(&p).unwrap();
        assert_eq!(s.masses(), &[0.75, 0.25]);
        assert_eq!(s.positions()[1], Vec3::new(0.75, 0.5, 0.0));

        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty float z\nend_header\n".to_vec();
        for (x, y, z) in [(0.25f64, 0.5f64, 0f32), (0.75, 0.5, 1.5)] {
            bin.extend(x.to_le_bytes());
            bin.extend(y.to_le_bytes());
            bin.extend(z.to_le_bytes());
        }
        let p = write(d.path(), "b.ply", &bin);
        let s = load_points(&p).unwrap();
        assert_eq!(s.positions()[1], Vec3::new(0.75, 0.5, 1.5));
        assert_eq!(s.masses(), &[0.5, 0.5]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_points(Path::new("/definitely/not/here.xyz")).unwrap_err();
        assert!(matches!(e, Error::Io { .. }) && e.is_validation());
    }

    #[test]
    fn cells_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let sq = crate::shapes::unit_square();
        let sites = SiteSet::uniform(vec![Vec3::new(0.25, 0.5, 0.0), Vec3::new(0.75, 0.5, 0.0)]).unwrap();
        let diagram = compute_diagram(&sq, &sites, &[0.0, 0.0]).unwrap();
        let p = d.path().join("cells.obj");
        export_cells(&diagram, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.matches("g cell_").count(), 2);
        let back = load_mesh(&p, None).unwrap().soup;
        assert!((back.area() - 1.0).abs() < 1e-9);

        let one = SiteSet::uniform(vec![Vec3::new(0.3, 0.3, 0.3)]).unwrap();
        let diagram = compute_diagram(&sq, &one, &[0.0]).unwrap();
        export_cells(&diagram, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().matches("g cell_").count(), 1);
    }

    #[test]
    fn report_round_trips_losslessly() {
        let mut r = RunReport::new("solve", serde_json::json!({"eta": 1e-6}));
        r.result = serde_json::json!({"weights": [0.1 + 0.2, 1.0 / 3.0, -2.5e-300]});
        r.warn("a");
        r.warn("a");
        let s = serde_json::to_string(&r).unwrap();
        let back: RunReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.warnings.len(), 1);
        assert_eq!(back.result["weights"][0].as_f64().unwrap(), 0.1 + 0.2);
        assert!(s.contains("\"schema\":1"));
    }
}
