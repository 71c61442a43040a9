//! CSV manifest: `filename`, one 0/1 column per fine class in taxonomy
//! order, `annoyance`, `split`.

use super::{DataError, DatasetSplit, Example, LabelSet, Split};
use crate::taxonomy::{FINE_NAMES, N_FINE};
use std::path::Path;

fn header() -> Vec<&'static str> {
    let mut h = vec!["filename"];
    h.extend(FINE_NAMES);
    h.extend(["annoyance", "split"]);
    h
}

pub fn read_manifest(path: &Path) -> Result<DatasetSplit, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let want = header();
    let got: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if got != want {
        let msg = match got.iter().zip(&want).position(|(g, w)| g != w) {
            Some(i) => format!("column {} is {:?}, expected {:?}", i + 1, got[i], want[i]),
            None => format!("{} columns, expected {}", got.len(), want.len()),
        };
        return Err(DataError::Manifest {
            path: path.to_path_buf(),
            msg,
        });
    }
    let mut examples = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec?;
        let err = |msg: String| DataError::Row {
            path: path.to_path_buf(),
            row,
            msg,
        };
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(err("empty filename".into()));
        }
        let mut fae = [false; N_FINE];
        for (k, slot) in fae.iter_mut().enumerate() {
            *slot = match rec[k + 1].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(err(format!(
                        "label {} is {other:?}, expected 0 or 1",
                        FINE_NAMES[k]
                    )))
                }
            };
        }
        let ar_txt = rec[N_FINE + 1].trim();
        let ar: f64 = ar_txt
            .parse()
            .map_err(|_| err(format!("annoyance {ar_txt:?} is not a number")))?;
        let labels = LabelSet::new(fae, ar).map_err(|e| err(e.to_string()))?;
        let split: Split = rec[N_FINE + 2].trim().parse().map_err(err)?;
        examples.push(Example { id, labels, split });
    }
    DatasetSplit::new(examples).map_err(|e| DataError::Manifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_manifest(path: &Path, data: &DatasetSplit) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for e in &data.examples {
        let mut rec = vec![e.id.clone()];
        rec.extend(
            e.labels
                .fae
                .iter()
                .map(|&b| if b { "1" } else { "0" }.to_string()),
        );
        rec.push(e.labels.ar.to_string());
        rec.push(e.split.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a manifest and checks every listed audio file exists under `audio_dir`.
pub fn load_delta(manifest: &Path, audio_dir: &Path) -> Result<DatasetSplit, DataError> {
    let data = read_manifest(manifest)?;
    for e in &data.examples {
        let p = audio_dir.join(&e.id);
        if !p.is_file() {
            return Err(DataError::MissingAudio {
                id: e.id.clone(),
                path: p,
            });
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::N_COARSE;

    fn line(name: &str, ones: &[usize], ar: &str, split: &str) -> String {
        let mut cols = vec![name.to_string()];
        cols.extend((0..N_FINE).map(|k| if ones.contains(&k) { "1" } else { "0" }.to_string()));
        cols.push(ar.into());
        cols.push(split.into());
        cols.join(",")
    }

    fn write(dir: &Path, rows: &[String]) -> std::path::PathBuf {
        let p = dir.join("m.csv");
        let mut text = header().join(",");
        for r in rows {
            text.push('\n');
            text.push_str(r);
        }
        text.push('\n');
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &[
                line("a.wav", &[1, 2], "3.25", "train"),
                line("b.wav", &[], "10", "test"),
            ],
        );
        let d = read_manifest(&p).unwrap();
        assert_eq!(d.sizes(), [1, 0, 1]);
        let mut vehicle = [false; N_COARSE];
        vehicle[0] = true;
        assert_eq!(d.examples[0].labels.cae(), vehicle);
        let q = dir.path().join("n.csv");
        write_manifest(&q, &d).unwrap();
        assert_eq!(read_manifest(&q).unwrap(), d);
        let r = dir.path().join("o.csv");
        write_manifest(&r, &read_manifest(&q).unwrap()).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), std::fs::read(&r).unwrap());
    }

    #[test]
    fn bad_rows_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &[
                line("a.wav", &[], "5", "train"),
                line("b.wav", &[], "11", "train"),
            ],
        );
        let e = read_manifest(&p).unwrap_err().to_string();
        assert!(e.contains("row 3") && e.contains("annoyance"), "{e}");

        let p = write(dir.path(), &[line("a.wav", &[], "5", "dev")]);
        assert!(read_manifest(&p)
            .unwrap_err()
            .to_string()
            .contains("unknown split"));

        let mut bad = line("a.wav", &[], "5", "train");
        bad = bad.replacen(",0,", ",2,", 1);
        let p = write(dir.path(), &[bad]);
        assert!(read_manifest(&p)
            .unwrap_err()
            .to_string()
            .contains("expected 0 or 1"));
    }

    #[test]
    fn missing_audio_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), &[line("gone.wav", &[], "5", "train")]);
        assert!(matches!(
            load_delta(&p, dir.path()),
            Err(DataError::MissingAudio { .. })
        ));
    }
}
