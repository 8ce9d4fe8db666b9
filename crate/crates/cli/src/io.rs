use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use meshmark::mesh::{normalize_unit_cube, parse_obj, Mesh, UnitCubeTransform};
use meshmark::train::write_atomic;
use sha2::{Digest, Sha256};

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_obj(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Reads a mesh and maps it into the unit cube.
pub fn read_normalized(path: &Path) -> Result<(Mesh, UnitCubeTransform)> {
    let mesh = read_mesh(path)?;
    normalize_unit_cube(&mesh).with_context(|| format!("normalizing {}", path.display()))
}

/// Normalized meshes of every `.obj` file in `dir`, in file-name order.
pub fn read_dataset(dir: &Path) -> Result<Vec<Mesh>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .obj files in {}", dir.display());
    }
    paths.iter().map(|p| Ok(read_normalized(p)?.0)).collect()
}

/// Atomic write (temporary file, then rename).
pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    write_atomic(path, contents.as_ref()).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// `path` with `suffix` appended to its file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}
