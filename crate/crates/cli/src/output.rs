use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use carbon_core::dataio::{render_table, Format, RunConfig, Table};
use carbon_core::{fixtures, Error};
use serde_json::{json, Map, Value};

use crate::inputs::sha256_hex;
use crate::{invalid, CliError};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| Error::io(path, e).into()
}

/// Scratch directory beside the target; moved into place by [`commit`](Staging::commit).
pub(crate) struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
    format: Format,
}

impl Staging {
    /// Fails early if `target` is a non-empty directory (unless `force`) or
    /// would overwrite one of `protected`.
    pub fn new(target: &Path, force: bool, protected: &[&Path]) -> Result<Self, CliError> {
        if target.exists() {
            if !target.is_dir() {
                return Err(invalid(format!("output path {} is not a directory", target.display())));
            }
            let canonical = target.canonicalize().map_err(io(target))?;
            for p in protected {
                if p.canonicalize().is_ok_and(|c| c == canonical) {
                    return Err(invalid(format!("refusing to write outputs into the input directory {}", p.display())));
                }
            }
            let occupied = fs::read_dir(target).map_err(io(target))?.next().is_some();
            if occupied && !force {
                return Err(invalid(format!(
                    "output directory {} is not empty; pass --force to replace it",
                    target.display()
                )));
            }
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io(&parent))?;
        let dir = tempfile::Builder::new().prefix(".carbon-").tempdir_in(&parent).map_err(io(&parent))?;
        Ok(Staging { dir, target: target.to_path_buf(), format: Format::Csv })
    }

    pub fn with_format(mut self, format: Format) -> Self {
        self.format = format;
        self
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    /// Absolute staging path of `rel`, with parent directories created.
    pub fn path(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.path().join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        Ok(p)
    }

    pub fn text(&self, rel: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(rel)?;
        fs::write(&p, text).map_err(io(&p))
    }

    /// Writes `table` to `stem` plus the extension of the run's format.
    pub fn table(&self, stem: &str, table: &Table) -> Result<(), CliError> {
        let text = render_table(table, self.format)?;
        self.text(&format!("{stem}.{}", self.format.extension()), &text)
    }

    /// Replaces the target with the staged directory.
    pub fn commit(self) -> Result<(), CliError> {
        let staged = self.dir.keep();
        let target = &self.target;
        if target.exists() {
            let old = staged.with_extension("old");
            fs::rename(target, &old).map_err(io(target))?;
            fs::rename(&staged, target).map_err(io(target))?;
            fs::remove_dir_all(&old).map_err(io(&old))?;
        } else {
            fs::rename(&staged, target).map_err(io(target))?;
        }
        Ok(())
    }
}

/// `manifest.json`: what produced an output directory.
pub(crate) struct Manifest {
    command: &'static str,
    config_hash: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    per_series: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: &'static str, config: &RunConfig, inputs: &BTreeMap<String, String>) -> Self {
        Manifest {
            command,
            config_hash: sha256_hex(config.to_canonical_string().as_bytes()),
            seed: config.seed,
            inputs: inputs.clone(),
            per_series: BTreeMap::new(),
        }
    }

    pub fn series(&mut self, name: String, entry: Value) {
        self.per_series.insert(name, entry);
    }

    pub fn to_json(&self) -> Value {
        let fixture_versions: Map<String, Value> = fixtures::all()
            .into_iter()
            .map(|(name, text)| (name.to_string(), Value::String(sha256_hex(text.as_bytes()))))
            .collect();
        json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "fixture_versions": fixture_versions,
            "inputs": self.inputs,
            "per_series": self.per_series,
        })
    }

    pub fn write(&self, staging: &Staging) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| invalid(e.to_string()))?;
        text.push('\n');
        staging.text("manifest.json", &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_replaces_only_when_forced() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        let s = Staging::new(&target, false, &[]).unwrap();
        s.text("a/b.txt", "one").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a/b.txt")).unwrap(), "one");

        assert!(Staging::new(&target, false, &[]).is_err());
        let s = Staging::new(&target, true, &[]).unwrap();
        s.text("c.txt", "two").unwrap();
        s.commit().unwrap();
        assert!(!target.join("a").exists());
        assert_eq!(fs::read_to_string(target.join("c.txt")).unwrap(), "two");
        // nothing but the target is left in the parent
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 1);
    }

    #[test]
    fn dropped_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        let s = Staging::new(&target, false, &[]).unwrap();
        s.text("x.txt", "partial").unwrap();
        drop(s);
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn input_directory_is_protected() {
        let root = tempfile::tempdir().unwrap();
        fs::write(root.path().join("energy.csv"), "x").unwrap();
        assert!(Staging::new(root.path(), true, &[root.path()]).is_err());
    }

    #[test]
    fn manifest_lists_every_fixture() {
        let m = Manifest::new("account", &RunConfig::default(), &BTreeMap::new()).to_json();
        assert_eq!(m["fixture_versions"].as_object().unwrap().len(), fixtures::all().len());
        assert_eq!(m["seed"], 42);
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    }
}
