use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use zip::write::SimpleFileOptions;
use zip::ZipArchive;

use super::xml::{parse_model_description, serialize_model_description};
use crate::error::{Error, Result};
use crate::model::ModelDescription;

/// Platform folders under `binaries/` reported even when absent.
pub const KNOWN_PLATFORMS: [&str; 7] = [
    "win32",
    "win64",
    "linux32",
    "linux64",
    "darwin64",
    "x86_64-linux",
    "x86_64-windows",
];

const DESCRIPTION_ENTRY: &str = "modelDescription.xml";

/// Metadata of an `.fmu`-layout archive. Binaries are never loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveManifest {
    pub model_description: ModelDescription,
    /// Entries below `resources/`, relative to that folder.
    pub resource_paths: Vec<String>,
    /// Platform folder → whether it contains at least one file.
    pub has_binary: BTreeMap<String, bool>,
}

impl ArchiveManifest {
    pub fn has_binary_for(&self, platform: &str) -> bool {
        self.has_binary.get(platform).copied().unwrap_or(false)
    }
}

fn archive_err(e: zip::result::ZipError) -> Error {
    Error::Archive(e.to_string())
}

pub fn open_archive(path: impl AsRef<Path>) -> Result<ArchiveManifest> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut zip = ZipArchive::new(file).map_err(|e| Error::Archive(format!("{}: {e}", path.display())))?;

    let mut has_binary: BTreeMap<String, bool> = KNOWN_PLATFORMS.iter().map(|p| (p.to_string(), false)).collect();
    let mut resource_paths = Vec::new();
    let names: Vec<String> = zip
        .file_names()
        .map(|n| n.map(|n| n.into_owned()))
        .collect::<std::result::Result<_, _>>()
        .map_err(archive_err)?;
    for name in &names {
        if let Some(rest) = name.strip_prefix("binaries/") {
            if let Some((platform, file)) = rest.split_once('/') {
                let entry = has_binary.entry(platform.to_string()).or_insert(false);
                *entry |= !file.is_empty() && !file.ends_with('/');
            }
        } else if let Some(rest) = name.strip_prefix("resources/") {
            if !rest.is_empty() && !rest.ends_with('/') {
                resource_paths.push(rest.to_string());
            }
        }
    }
    resource_paths.sort();

    let mut entry = zip
        .by_name(DESCRIPTION_ENTRY)
        .map_err(|_| Error::Archive(format!("{}: no {DESCRIPTION_ENTRY} at archive root", path.display())))?;
    let mut xml = Vec::new();
    entry.read_to_end(&mut xml)?;
    Ok(ArchiveManifest {
        model_description: parse_model_description(&xml)?,
        resource_paths,
        has_binary,
    })
}

/// Writes a metadata-only archive: the description plus extra entries
/// (paths relative to the archive root).
pub fn write_archive(path: impl AsRef<Path>, md: &ModelDescription, extra: &[(&str, &[u8])]) -> Result<()> {
    let file = File::create(path)?;
    let mut zip = zip::ZipWriter::new(file);
    let options = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    zip.start_file(DESCRIPTION_ENTRY, options).map_err(archive_err)?;
    zip.write_all(&serialize_model_description(md))?;
    for (name, data) in extra {
        zip.start_file(*name, options).map_err(archive_err)?;
        zip.write_all(data)?;
    }
    zip.finish().map_err(archive_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelFactory;
    use crate::models::{make_frictionless_pendulum, PendulumParams};

    fn desc() -> ModelDescription {
        (*make_frictionless_pendulum(&PendulumParams::fmu())
            .unwrap()
            .description())
        .clone()
    }

    #[test]
    fn description_only_archive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fmu");
        write_archive(&path, &desc(), &[]).unwrap();
        let m = open_archive(&path).unwrap();
        assert_eq!(m.model_description, desc());
        assert!(m.has_binary.values().all(|b| !b));
        assert!(m.resource_paths.is_empty());
    }

    #[test]
    fn binary_entries_are_flagged_not_loaded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fmu");
        write_archive(
            &path,
            &desc(),
            &[
                ("binaries/x86_64-linux/model.so", b"\x7fELF not really"),
                ("resources/data/table.csv", b"t,x\n"),
            ],
        )
        .unwrap();
        let m = open_archive(&path).unwrap();
        assert!(m.has_binary_for("x86_64-linux"));
        assert!(!m.has_binary_for("win64"));
        assert_eq!(m.resource_paths, vec!["data/table.csv".to_string()]);
    }

    #[test]
    fn non_zip_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fmu");
        std::fs::write(&path, "plain text").unwrap();
        assert!(matches!(open_archive(&path), Err(Error::Archive(_))));
    }

    #[test]
    fn missing_description_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fmu");
        let mut zip = zip::ZipWriter::new(File::create(&path).unwrap());
        zip.start_file("resources/a.txt", SimpleFileOptions::default()).unwrap();
        zip.write_all(b"a").unwrap();
        zip.finish().unwrap();
        assert!(matches!(open_archive(&path), Err(Error::Archive(m)) if m.contains("modelDescription.xml")));
    }
}
