//! On-disk formats: tree and measure JSON, text measures, beta files, point
//! clouds, dense matrices and their JSON sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use twr_core::sampling::PointCloud;
use twr_core::{build_tree, EdgeVector, MatrixKind, Measure, SymmetricMatrix, Tree};

use crate::error::{CliError, Context, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub root: usize,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub child: usize,
    pub parent: usize,
    pub weight: f64,
}

impl TreeFile {
    pub fn from_tree(tree: &Tree) -> Self {
        TreeFile {
            root: tree.root(),
            edges: tree
                .edges()
                .map(|(child, parent, weight)| EdgeRecord {
                    child,
                    parent,
                    weight,
                })
                .collect(),
        }
    }

    pub fn to_tree(&self) -> twr_core::Result<Tree> {
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| (e.child, e.parent, e.weight))
            .collect();
        build_tree(&edges, self.root)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn json_error(path: &Path, err: serde_json::Error) -> CliError {
    CliError::input(
        format!("{}:{}:{}", path.display(), err.line(), err.column()),
        err,
    )
}

pub fn parse_tree(text: &str, path: &Path) -> Result<Tree> {
    let file: TreeFile = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
    file.to_tree().context(path.display())
}

pub fn read_tree(path: &Path) -> Result<Tree> {
    parse_tree(&read_text(path)?, path)
}

pub fn tree_to_json(tree: &Tree) -> String {
    let mut s = serde_json::to_string_pretty(&TreeFile::from_tree(tree)).expect("tree serializes");
    s.push('\n');
    s
}

pub fn write_tree(path: &Path, tree: &Tree) -> Result<()> {
    write_bytes(path, tree_to_json(tree).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub support: Vec<(usize, f64)>,
}

fn make_measure(entries: Vec<(usize, f64)>, normalize: bool) -> twr_core::Result<Measure> {
    if normalize {
        Measure::normalized(entries)
    } else {
        Measure::new(entries)
    }
}

/// Parse a measure from JSON (`{"support": [[node, mass], ...]}`) or from
/// whitespace-separated `node mass` lines. Blank lines and lines starting
/// with `#` are skipped in the text form.
pub fn parse_measure(text: &str, path: &Path, normalize: bool) -> Result<Measure> {
    let trimmed = text.trim_start();
    let entries = if trimmed.starts_with('{') {
        let file: MeasureFile = serde_json::from_str(text).map_err(|e| json_error(path, e))?;
        file.support
    } else {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{}:{}", path.display(), i + 1);
            let mut fields = line.split_whitespace();
            let (Some(node), Some(mass), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(CliError::input(at(), "expected `node mass`"));
            };
            let node = node
                .parse()
                .map_err(|_| CliError::input(at(), format!("bad node id `{node}`")))?;
            let mass = mass
                .parse()
                .map_err(|_| CliError::input(at(), format!("bad mass `{mass}`")))?;
            entries.push((node, mass));
        }
        entries
    };
    make_measure(entries, normalize).context(path.display())
}

pub fn read_measure(path: &Path, normalize: bool) -> Result<Measure> {
    parse_measure(&read_text(path)?, path, normalize)
}

pub fn measure_to_json(measure: &Measure) -> String {
    let mut s = serde_json::to_string(&MeasureFile {
        support: measure.support().to_vec(),
    })
    .expect("measure serializes");
    s.push('\n');
    s
}

/// Every regular, non-hidden file in `dir`, sorted by file name.
pub fn list_measure_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let entry = entry.map_err(CliError::io(dir))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        return Err(CliError::config(format!(
            "{}: no measure files",
            dir.display()
        )));
    }
    Ok(files)
}

/// Load a measure directory and check each measure against `tree`.
pub fn read_measure_dir(dir: &Path, tree: &Tree, normalize: bool) -> Result<Vec<Measure>> {
    list_measure_files(dir)?
        .iter()
        .map(|path| {
            let m = read_measure(path, normalize)?;
            m.check_tree(tree).context(path.display())?;
            Ok(m)
        })
        .collect()
}

/// Per-edge box limits keyed by child node; unlisted edges take `default`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BetaFile {
    #[serde(default)]
    pub default: f64,
    #[serde(default)]
    pub beta: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<(usize, f64)>>,
}

fn scatter(tree: &Tree, default: f64, entries: &[(usize, f64)], path: &Path) -> Result<EdgeVector> {
    let mut out = vec![default; tree.edge_count()];
    for &(child, value) in entries {
        tree.check_node(child).context(path.display())?;
        if child == tree.root() {
            return Err(CliError::input(path.display(), "the root has no edge"));
        }
        out[tree.edge_of(child)] = value;
    }
    Ok(EdgeVector::new(out))
}

/// Returns `(α, β)` as edge vectors of `tree`. A missing `alpha` means none.
pub fn read_beta(path: &Path, tree: &Tree) -> Result<(Option<EdgeVector>, EdgeVector)> {
    let text = read_text(path)?;
    let file: BetaFile = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
    let beta = scatter(tree, file.default, &file.beta, path)?;
    let alpha = match &file.alpha {
        Some(a) => Some(scatter(tree, 0.0, a, path)?),
        None => None,
    };
    Ok((alpha, beta))
}

/// One point per row, one coordinate per column, no header.
pub fn read_points(path: &Path) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(path.display(), e))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let at = || format!("{}:{}", path.display(), i + 1);
        let record = record.map_err(|e| CliError::input(at(), e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| CliError::input(at(), format!("bad coordinate `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    PointCloud::from_rows(&rows).context(path.display())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    #[default]
    Csv,
    Bin,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Bin => "bin",
        }
    }

    /// `bin` for a `.bin` extension, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Bin,
            _ => MatrixFormat::Csv,
        }
    }
}

pub const MAGIC: &[u8; 8] = b"TWGRAM01";
pub const HEADER_LEN: usize = 16;

fn kind_code(kind: MatrixKind) -> u32 {
    match kind {
        MatrixKind::Distance => 0,
        MatrixKind::Kernel => 1,
    }
}

pub fn kind_name(kind: MatrixKind) -> &'static str {
    match kind {
        MatrixKind::Distance => "distance",
        MatrixKind::Kernel => "kernel",
    }
}

pub fn encode_matrix(m: &SymmetricMatrix, format: MatrixFormat) -> Vec<u8> {
    match format {
        MatrixFormat::Csv => {
            let n = m.size();
            let mut s = String::with_capacity(n * n * 20);
            for i in 0..n {
                for (j, x) in m.row(i).iter().enumerate() {
                    if j > 0 {
                        s.push(',');
                    }
                    write!(s, "{x}").expect("write to string");
                }
                s.push('\n');
            }
            s.into_bytes()
        }
        MatrixFormat::Bin => {
            let n = u32::try_from(m.size()).expect("matrix size fits in u32");
            let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
            out.extend_from_slice(MAGIC);
            out.extend_from_slice(&n.to_le_bytes());
            out.extend_from_slice(&kind_code(m.kind()).to_le_bytes());
            for x in m.as_slice() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out
        }
    }
}

pub fn write_matrix(path: &Path, m: &SymmetricMatrix, format: MatrixFormat) -> Result<()> {
    write_bytes(path, &encode_matrix(m, format))
}

/// Read either format. Binary files are recognised by their magic; CSV
/// files carry no kind, so `csv_kind` is used.
pub fn read_matrix(path: &Path, csv_kind: MatrixKind) -> Result<SymmetricMatrix> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let bad = |msg: &str| CliError::input(path.display(), msg);
    if bytes.starts_with(&MAGIC[..7]) {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("unsupported binary matrix header"));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let kind = match u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) {
            0 => MatrixKind::Distance,
            1 => MatrixKind::Kernel,
            _ => return Err(bad("unknown matrix kind")),
        };
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * n * n {
            return Err(bad("binary matrix length does not match its header"));
        }
        let data: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        return SymmetricMatrix::from_row_major(n, kind, &data).context(path.display());
    }
    let text = String::from_utf8(bytes).map_err(|_| bad("not UTF-8"))?;
    let mut data = Vec::new();
    let mut n = None;
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(format!("{}:{}", path.display(), i + 1), e))?;
        if *n.get_or_insert(row.len()) != row.len() {
            return Err(CliError::input(
                format!("{}:{}", path.display(), i + 1),
                "ragged row",
            ));
        }
        data.extend(row);
    }
    let n = n.unwrap_or(0);
    if data.len() != n * n {
        return Err(bad("matrix is not square"));
    }
    SymmetricMatrix::from_row_major(n, csv_kind, &data).context(path.display())
}

/// Metadata written next to every matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub fingerprint: String,
    pub matrix: String,
    pub kind: String,
    pub format: MatrixFormat,
    pub size: usize,
    pub pair_count: usize,
    pub metric: String,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
}

/// `D.csv` → `D.csv.json`.
pub fn sidecar_path(matrix: &Path) -> PathBuf {
    let mut name = matrix.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn write_sidecar(matrix: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut s = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    s.push('\n');
    write_bytes(&sidecar_path(matrix), s.as_bytes())
}

pub fn read_sidecar(matrix: &Path) -> Result<Option<Sidecar>> {
    let path = sidecar_path(matrix);
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| json_error(&path, e))
}
