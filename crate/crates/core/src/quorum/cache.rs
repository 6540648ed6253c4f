//! On-disk cache of tabulated homodyne kernels.
//!
//! Layout (little endian): magic `OPTK`, format version `u32`, `levels u32`,
//! `eta, x_min, x_max, spacing` as `f64`, `points u64`, then the tables in
//! pair order. A file whose header does not match the request is rebuilt.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::quorum::homodyne::{GridSpec, HomodyneKernel};

const MAGIC: &[u8; 4] = b"OPTK";
pub const FORMAT_VERSION: u32 = 1;

/// File name derived from the key, so different configurations coexist.
pub fn cache_file(dir: &Path, levels: usize, eta: f64, grid: GridSpec) -> PathBuf {
    dir.join(format!(
        "kernel-{levels}-{:016x}-{:016x}-{:016x}-{:016x}.bin",
        eta.to_bits(),
        grid.x_min.to_bits(),
        grid.x_max.to_bits(),
        grid.spacing.to_bits()
    ))
}

pub fn write_kernel(path: &Path, kernel: &HomodyneKernel) -> Result<()> {
    let grid = kernel.grid();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(kernel.levels() as u32).to_le_bytes());
    for v in [kernel.eta(), grid.x_min, grid.x_max, grid.spacing] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&(grid.points() as u64).to_le_bytes());
    for table in kernel.tables() {
        for v in table {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io_error)?;
    file.write_all(&bytes).map_err(io_error)?;
    file.sync_all().map_err(io_error)?;
    fs::rename(&tmp, path).map_err(io_error)
}

/// Reads a cached kernel; `Ok(None)` when the file is absent or its key or
/// version differ from the request.
pub fn read_kernel(path: &Path, levels: usize, eta: f64, grid: GridSpec) -> Result<Option<HomodyneKernel>> {
    let mut bytes = Vec::new();
    match fs::File::open(path) {
        Ok(mut f) => f.read_to_end(&mut bytes).map_err(io_error)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_error(e)),
    };
    let mut cursor = Cursor { bytes: &bytes, at: 0 };
    let header_ok = cursor.take(4) == Some(MAGIC.as_slice())
        && cursor.u32() == Some(FORMAT_VERSION)
        && cursor.u32() == Some(levels as u32)
        && cursor.f64().map(f64::to_bits) == Some(eta.to_bits())
        && cursor.f64().map(f64::to_bits) == Some(grid.x_min.to_bits())
        && cursor.f64().map(f64::to_bits) == Some(grid.x_max.to_bits())
        && cursor.f64().map(f64::to_bits) == Some(grid.spacing.to_bits())
        && cursor.u64() == Some(grid.points() as u64);
    if !header_ok {
        return Ok(None);
    }
    let pairs = levels * (levels + 1) / 2;
    let points = grid.points();
    if bytes.len() - cursor.at != pairs * points * 8 {
        return Ok(None);
    }
    let mut tables = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let table: Vec<f64> = (0..points).map(|_| cursor.f64().expect("length checked")).collect();
        if table.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        tables.push(table);
    }
    HomodyneKernel::from_parts(levels, eta, grid, tables).map(Some)
}

/// Loads the kernel from `dir` or builds and stores it.
pub fn load_or_build(dir: &Path, levels: usize, eta: f64, grid: GridSpec) -> Result<HomodyneKernel> {
    let path = cache_file(dir, levels, eta, grid);
    if let Some(kernel) = read_kernel(&path, levels, eta, grid)? {
        return Ok(kernel);
    }
    let kernel = HomodyneKernel::build(levels, eta, grid)?;
    fs::create_dir_all(dir).map_err(io_error)?;
    write_kernel(&path, &kernel)?;
    Ok(kernel)
}

fn io_error(e: io::Error) -> Error {
    Error::KernelCache(e.to_string())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.at..self.at + n)?;
        self.at += n;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}
