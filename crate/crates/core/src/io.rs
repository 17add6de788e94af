//! Matrix Market exchange and benchmark manifests.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use nalgebra_sparse::io::{load_coo_from_matrix_market_file, save_to_matrix_market_file};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::StateMatrix;
use crate::system::LtiSystem;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_coo(path: &Path) -> Result<CooMatrix<f64>> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    load_coo_from_matrix_market_file(path).map_err(|e| Error::MatrixMarket {
        path: path.display().to_string(),
        message: e.message().to_string(),
    })
}

pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    let coo = read_coo(path)?;
    let mut m = DMatrix::zeros(coo.nrows(), coo.ncols());
    for (i, j, v) in coo.triplet_iter() {
        m[(i, j)] += *v;
    }
    Ok(m)
}

/// Reads a system matrix, kept sparse when at most a quarter of its entries are stored.
pub fn read_state_matrix(path: &Path) -> Result<StateMatrix> {
    let coo = read_coo(path)?;
    if coo.nrows() != coo.ncols() {
        return Err(Error::dims(
            "system matrix",
            "square",
            format!("{}x{}", coo.nrows(), coo.ncols()),
        ));
    }
    if 4 * coo.nnz() <= coo.nrows() * coo.ncols() {
        Ok(StateMatrix::Sparse(CsrMatrix::from(&coo)))
    } else {
        let mut m = DMatrix::zeros(coo.nrows(), coo.ncols());
        for (i, j, v) in coo.triplet_iter() {
            m[(i, j)] += *v;
        }
        Ok(StateMatrix::Dense(m))
    }
}

/// Writes in coordinate format with shortest round-trip float formatting.
pub fn write_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                coo.push(i, j, m[(i, j)]);
            }
        }
    }
    save_to_matrix_market_file(&coo, path).map_err(io_err(path))
}

pub fn write_state_matrix(path: &Path, a: &StateMatrix) -> Result<()> {
    match a {
        StateMatrix::Dense(m) => write_dense(path, m),
        StateMatrix::Sparse(m) => save_to_matrix_market_file(m, path).map_err(io_err(path)),
    }
}

/// Describes a system stored as `A.mtx`, `B.mtx`, `C.mtx` (plus optional extras) in one directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemManifest {
    pub name: String,
    pub state_dim: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub a: String,
    pub b: String,
    pub c: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl SystemManifest {
    pub fn for_system(name: &str, sys: &LtiSystem) -> Self {
        SystemManifest {
            name: name.to_string(),
            state_dim: sys.state_dim(),
            inputs: sys.input_dim(),
            outputs: sys.output_dim(),
            a: "A.mtx".into(),
            b: "B.mtx".into(),
            c: "C.mtx".into(),
            x0: None,
            training: None,
            notes: vec![],
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        toml::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(&path, text).map_err(io_err(&path))
    }
}

/// Writes the system matrices, optional training matrix and a manifest into `dir`.
pub fn export_system(dir: &Path, manifest: &SystemManifest, sys: &LtiSystem, training: Option<&DMatrix<f64>>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_state_matrix(&dir.join(&manifest.a), &sys.a)?;
    write_dense(&dir.join(&manifest.b), &sys.b)?;
    write_dense(&dir.join(&manifest.c), &sys.c)?;
    let mut manifest = manifest.clone();
    manifest.x0 = Some("x0.mtx".into());
    write_dense(&dir.join("x0.mtx"), &DMatrix::from_column_slice(sys.x0.len(), 1, sys.x0.as_slice()))?;
    if let Some(x) = training {
        manifest.training = Some("X0.mtx".into());
        write_dense(&dir.join("X0.mtx"), x)?;
    }
    manifest.save(dir)
}

/// Loaded system and, when present, its training matrix.
pub struct LoadedSystem {
    pub manifest: SystemManifest,
    pub system: LtiSystem,
    pub training: Option<DMatrix<f64>>,
}

pub fn import_system(dir: &Path) -> Result<LoadedSystem> {
    let manifest = SystemManifest::load(dir)?;
    let a = read_state_matrix(&dir.join(&manifest.a))?;
    let n = a.nrows();
    let b = read_input_matrix(&dir.join(&manifest.b), n)?;
    let c = read_output_matrix(&dir.join(&manifest.c), n)?;
    let x0 = match &manifest.x0 {
        Some(f) => {
            let m = read_dense(&dir.join(f))?;
            nalgebra::DVector::from_column_slice(m.as_slice())
        }
        None => nalgebra::DVector::zeros(n),
    };
    let training = manifest.training.as_ref().map(|f| read_dense(&dir.join(f))).transpose()?;
    let system = LtiSystem::new(a, b, c, x0)?;
    Ok(LoadedSystem {
        manifest,
        system,
        training,
    })
}

/// Reads `B`, accepting the transposed orientation for single-input data.
pub fn read_input_matrix(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    let b = read_dense(path)?;
    if b.nrows() == n {
        Ok(b)
    } else if b.ncols() == n && b.nrows() == 1 {
        Ok(b.transpose())
    } else {
        Err(Error::dims("input matrix B", format!("{n} rows"), format!("{}x{}", b.nrows(), b.ncols())))
    }
}

/// Reads `C`, accepting the transposed orientation for single-output data.
pub fn read_output_matrix(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    let c = read_dense(path)?;
    if c.ncols() == n {
        Ok(c)
    } else if c.nrows() == n && c.ncols() == 1 {
        Ok(c.transpose())
    } else {
        Err(Error::dims("output matrix C", format!("{n} columns"), format!("{}x{}", c.nrows(), c.ncols())))
    }
}

/// Directory named by `ICMOR_DATA_DIR`, or `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

pub const DATA_DIR_ENV: &str = "ICMOR_DATA_DIR";
