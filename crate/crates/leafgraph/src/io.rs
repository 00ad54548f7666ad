//! Files on disk: manifest and id-index CSVs, `LGFS` feature stores, `LGGR`
//! graph caches, `LGCK` checkpoints and PGM/PPM images.
//!
//! A feature store `x.lgfs` always travels with its id index `x.ids.csv`
//! (`sample_id,row`).

use std::fs;
use std::path::{Path, PathBuf};

use leafgraph_core::dataset::{DatasetManifest, FeatureStore, ManifestEntry, Split};
use leafgraph_core::graph::SimilarityGraph;
use leafgraph_core::image::{decode_pnm, encode_pnm, RawImage};
use leafgraph_core::model::SageModel;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

/// Writes through a sibling temp file so readers never see a partial file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| AppError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Runtime(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct ManifestRow {
    sample_id: String,
    label: String,
    split: String,
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    AppError::Data(format!("{}: {e}", path.display()))
}

fn check_header(path: &Path, reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(AppError::Data(format!(
            "{}: expected header '{}', found '{}'",
            path.display(),
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// `sample_id,label,split` with a header; an empty split means unassigned.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    check_header(path, &mut reader, &["sample_id", "label", "split"])?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let split = match row.split.as_str() {
            "" => None,
            s => Some(Split::parse(s).map_err(|e| AppError::file(path, e))?),
        };
        entries.push(ManifestEntry {
            sample_id: row.sample_id,
            label: row.label,
            split,
        });
    }
    DatasetManifest::new(entries).map_err(|e| AppError::file(path, e))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for e in manifest.entries() {
        w.serialize(ManifestRow {
            sample_id: e.sample_id.clone(),
            label: e.label.clone(),
            split: e.split.map_or("", Split::as_str).to_string(),
        })
        .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Runtime(e.to_string()))?;
    write_bytes(path, &bytes)
}

#[derive(Serialize, Deserialize)]
struct IdRow {
    sample_id: String,
    row: usize,
}

/// Reads `sample_id,row`; rows must cover `0..n` exactly once.
pub fn read_id_index(path: &Path) -> Result<Vec<String>> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    check_header(path, &mut reader, &["sample_id", "row"])?;
    let rows = reader
        .deserialize::<IdRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))?;
    let mut ids = vec![None; rows.len()];
    for r in rows {
        let slot = ids
            .get_mut(r.row)
            .ok_or_else(|| AppError::Data(format!("{}: row {} out of range", path.display(), r.row)))?;
        if slot.replace(r.sample_id).is_some() {
            return Err(AppError::Data(format!("{}: row {} listed twice", path.display(), r.row)));
        }
    }
    Ok(ids.into_iter().map(|id| id.unwrap_or_default()).collect())
}

pub fn write_id_index(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for (row, id) in ids.iter().enumerate() {
        w.serialize(IdRow {
            sample_id: id.clone(),
            row,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Runtime(e.to_string()))?;
    write_bytes(path, &bytes)
}

/// `features.lgfs` → `features.ids.csv`.
pub fn id_index_path(store: &Path) -> PathBuf {
    store.with_extension("ids.csv")
}

pub fn read_feature_store(path: &Path) -> Result<FeatureStore> {
    let ids = read_id_index(&id_index_path(path))?;
    FeatureStore::decode(&read_bytes(path)?, ids).map_err(|e| AppError::file(path, e))
}

pub fn write_feature_store(path: &Path, store: &FeatureStore) -> Result<()> {
    write_bytes(path, &store.encode()?)?;
    write_id_index(&id_index_path(path), store.ids())
}

pub fn read_graph(path: &Path) -> Result<SimilarityGraph> {
    SimilarityGraph::decode(&read_bytes(path)?).map_err(|e| AppError::file(path, e))
}

pub fn write_graph(path: &Path, graph: &SimilarityGraph) -> Result<()> {
    write_bytes(path, &graph.encode()?)
}

pub fn read_checkpoint(path: &Path) -> Result<SageModel> {
    SageModel::from_checkpoint(&read_bytes(path)?).map_err(|e| AppError::file(path, e))
}

pub fn write_checkpoint(path: &Path, model: &SageModel) -> Result<()> {
    write_bytes(path, &model.to_checkpoint()?)
}

pub fn read_image(path: &Path) -> Result<RawImage> {
    decode_pnm(&read_bytes(path)?).map_err(|e| AppError::file(path, e))
}

pub fn write_image(path: &Path, img: &RawImage) -> Result<()> {
    write_bytes(path, &encode_pnm(img))
}

/// `dir/<id>.pgm`, falling back to `dir/<id>.ppm`.
pub fn find_image(dir: &Path, sample_id: &str) -> Option<PathBuf> {
    ["pgm", "ppm"]
        .iter()
        .map(|ext| dir.join(format!("{sample_id}.{ext}")))
        .find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;
    use leafgraph_core::dataset::FeatureKind;

    fn manifest() -> DatasetManifest {
        DatasetManifest::new(vec![
            ManifestEntry {
                sample_id: "a".into(),
                label: "healthy".into(),
                split: Some(Split::Train),
            },
            ManifestEntry {
                sample_id: "b,c".into(),
                label: "rust".into(),
                split: None,
            },
        ])
        .unwrap()
    }

    #[test]
    fn manifest_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_manifest(&p, &manifest()).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "sample_id,label,split\na,healthy,train\n\"b,c\",rust,\n");
        let back = read_manifest(&p).unwrap();
        assert_eq!(back, manifest());
        let q = dir.path().join("m2.csv");
        write_manifest(&q, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
    }

    #[test]
    fn manifest_rejects_bad_header_and_split() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "id,label,split\na,x,train\n").unwrap();
        assert_eq!(read_manifest(&p).unwrap_err().exit_code(), 2);
        fs::write(&p, "sample_id,label,split\na,x,holdout\n").unwrap();
        assert_eq!(read_manifest(&p).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn feature_store_round_trip_with_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.lgfs");
        let store = FeatureStore::new(
            FeatureKind::Spatial,
            vec![2, 1, 3],
            (0..12).map(|i| i as f32 / 7.0).collect(),
            vec!["x".into(), "y".into()],
        )
        .unwrap();
        write_feature_store(&p, &store).unwrap();
        assert!(id_index_path(&p).ends_with("f.ids.csv"));
        let back = read_feature_store(&p).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.encode().unwrap(), fs::read(&p).unwrap());
    }

    #[test]
    fn id_index_must_be_a_permutation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.csv");
        fs::write(&p, "sample_id,row\nb,1\na,0\n").unwrap();
        assert_eq!(read_id_index(&p).unwrap(), vec!["a", "b"]);
        fs::write(&p, "sample_id,row\nb,1\na,1\n").unwrap();
        assert!(read_id_index(&p).is_err());
        fs::write(&p, "sample_id,row\na,5\n").unwrap();
        assert!(read_id_index(&p).is_err());
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let err = read_bytes(Path::new("/nonexistent/leafgraph.lgfs")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
