//! Text file formats: dataset manifest, feature matrices, label files and
//! model checkpoints. Numbers are written with the shortest representation
//! that parses back to the same `f64`, so every write-read cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::classifier::LinearSoftmaxModel;
use crate::dataset::{Dataset, Split, Video};
use crate::duration::DurationModel;
use crate::error::{Result, SegError};
use crate::grammar::Grammar;
use crate::multiview::ConfidenceNet;
use crate::synth::Synthetic;
use crate::types::{ActionSet, Transcript};

pub const MANIFEST_MAGIC: &str = "onseg-manifest 1";
pub const CHECKPOINT_MAGIC: &str = "onseg-checkpoint 1";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SegError::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| SegError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| SegError::io(path, e))
}

/// First free `dir/{stem}-NNN.{ext}`, so repeated runs never overwrite each other.
pub fn next_free_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    (0..)
        .map(|k| dir.join(format!("{stem}-{k:03}.{ext}")))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

/// Non-empty lines with their 1-based numbers, `#` comments stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(SegError::parse(
            path,
            line,
            format!("expected a finite number, found {s:?}"),
        )),
    }
}

fn parse_usize(s: &str, path: &Path, line: usize, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| {
        SegError::parse(
            path,
            line,
            format!("{what} must be a non-negative integer, found {s:?}"),
        )
    })
}

fn join_values<'a>(values: impl IntoIterator<Item = &'a f64>, sep: &str) -> String {
    let mut out = String::new();
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            out.push_str(sep);
        }
        write!(out, "{v}").expect("write to string");
    }
    out
}

// ---- feature matrices ----

/// Header line `T,F1` with the two dimensions, then one comma-separated row per frame.
pub fn format_features(features: &Array2<f64>) -> String {
    let mut out = format!("{},{}\n", features.nrows(), features.ncols());
    for row in features.rows() {
        out.push_str(&join_values(row.iter(), ","));
        out.push('\n');
    }
    out
}

pub fn parse_features(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| SegError::parse(path, 1, "missing header `T,F1`"))?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 2 {
        return Err(SegError::parse(path, hl, "header must be `T,F1`"));
    }
    let t_len = parse_usize(dims[0], path, hl, "T")?;
    let f_dim = parse_usize(dims[1], path, hl, "F1")?;
    let mut data = Vec::with_capacity(t_len * f_dim);
    let mut rows = 0;
    for (ln, line) in lines {
        let before = data.len();
        for v in line.split(',') {
            data.push(parse_f64(v, path, ln)?);
        }
        if data.len() - before != f_dim {
            return Err(SegError::parse(
                path,
                ln,
                format!("row has {} values, header declares F1 = {f_dim}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != t_len {
        return Err(SegError::parse(
            path,
            hl,
            format!("header declares T = {t_len} but file has {rows} rows"),
        ));
    }
    Ok(Array2::from_shape_vec((t_len, f_dim), data).expect("shape checked"))
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    parse_features(&read_text(path)?, path)
}

// ---- label files ----

/// One action name per line.
pub fn format_labels(labels: &[usize], actions: &ActionSet) -> String {
    let mut out = String::new();
    for &a in labels {
        out.push_str(actions.name(a));
        out.push('\n');
    }
    out
}

pub fn parse_labels(text: &str, actions: &ActionSet, path: &Path) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(ln, name)| {
            actions
                .index_of(name)
                .ok_or_else(|| SegError::parse(path, ln, format!("unknown action {name:?}")))
        })
        .collect()
}

pub fn read_labels(path: &Path, actions: &ActionSet) -> Result<Vec<usize>> {
    parse_labels(&read_text(path)?, actions, path)
}

// ---- manifest ----

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub recording: String,
    pub split: Split,
    pub frames: usize,
    /// Relative to the manifest's directory.
    pub features: PathBuf,
    /// Ground-truth labels, used only for evaluation.
    pub labels: Option<PathBuf>,
    pub transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory that relative paths resolve against.
    pub root: PathBuf,
    pub actions: ActionSet,
    pub entries: Vec<ManifestEntry>,
}

fn transcript_names(tr: &Transcript, actions: &ActionSet) -> String {
    tr.actions()
        .iter()
        .map(|&a| actions.name(a))
        .collect::<Vec<_>>()
        .join(",")
}

impl Manifest {
    pub fn format(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC}\nactions {}\n", self.actions.labels().join(" "));
        if let Some(b) = self.actions.background() {
            writeln!(out, "background {}", self.actions.name(b)).expect("write to string");
        }
        for e in &self.entries {
            let labels = e.labels.as_ref().map_or("-".to_string(), |p| p.display().to_string());
            writeln!(
                out,
                "video id={} recording={} split={} frames={} features={} labels={} transcript={}",
                e.id,
                e.recording,
                e.split.as_str(),
                e.frames,
                e.features.display(),
                labels,
                transcript_names(&e.transcript, &self.actions)
            )
            .expect("write to string");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Manifest> {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut lines = content_lines(text);
        match lines.next() {
            Some((_, l)) if l == MANIFEST_MAGIC => {}
            Some((ln, _)) => {
                return Err(SegError::parse(
                    path,
                    ln,
                    format!("first line must be `{MANIFEST_MAGIC}`"),
                ))
            }
            None => return Err(SegError::parse(path, 1, "empty manifest")),
        }
        let mut actions: Option<ActionSet> = None;
        let mut entries = Vec::new();
        for (ln, line) in lines {
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match key {
                "actions" => {
                    if actions.is_some() {
                        return Err(SegError::parse(path, ln, "duplicate `actions` line"));
                    }
                    if !entries.is_empty() {
                        return Err(SegError::parse(path, ln, "`actions` must precede every video"));
                    }
                    let set = ActionSet::new(rest.split_whitespace())
                        .map_err(|e| SegError::parse(path, ln, e.to_string()))?;
                    actions = Some(set);
                }
                "background" => {
                    let set = actions
                        .take()
                        .ok_or_else(|| SegError::parse(path, ln, "`background` must follow `actions`"))?;
                    actions = Some(
                        set.with_background(rest)
                            .map_err(|e| SegError::parse(path, ln, e.to_string()))?,
                    );
                }
                "video" => {
                    let set = actions
                        .as_ref()
                        .ok_or_else(|| SegError::parse(path, ln, "`actions` must precede every video"))?;
                    entries.push(parse_entry(rest, set, path, ln)?);
                }
                other => return Err(SegError::parse(path, ln, format!("unknown directive {other:?}"))),
            }
        }
        let actions = actions.ok_or_else(|| SegError::parse(path, 1, "missing `actions` line"))?;
        Ok(Manifest { root, actions, entries })
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        Manifest::parse(&read_text(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.format())
    }

    pub fn features_path(&self, idx: usize) -> PathBuf {
        self.root.join(&self.entries[idx].features)
    }

    pub fn labels_path(&self, idx: usize) -> Option<PathBuf> {
        self.entries[idx].labels.as_ref().map(|p| self.root.join(p))
    }

    /// Loads every feature matrix and checks it against the declared frame count.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let videos = self
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let path = self.features_path(i);
                let features = read_features(&path)?;
                if features.nrows() != e.frames {
                    return Err(SegError::parse(
                        &path,
                        1,
                        format!(
                            "video {} declares {} frames but has {}",
                            e.id,
                            e.frames,
                            features.nrows()
                        ),
                    ));
                }
                Ok(Video {
                    id: e.id.clone(),
                    recording: e.recording.clone(),
                    split: e.split,
                    transcript: e.transcript.clone(),
                    features,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.actions.clone(), videos)
    }

    /// Ground-truth labels of video `idx`, if the manifest names a file.
    pub fn load_ground_truth(&self, idx: usize) -> Result<Option<Vec<usize>>> {
        let Some(path) = self.labels_path(idx) else {
            return Ok(None);
        };
        let labels = read_labels(&path, &self.actions)?;
        let e = &self.entries[idx];
        if labels.len() != e.frames {
            return Err(SegError::parse(
                &path,
                labels.len().max(1),
                format!(
                    "video {} declares {} frames but has {} labels",
                    e.id,
                    e.frames,
                    labels.len()
                ),
            ));
        }
        Ok(Some(labels))
    }

    /// Keeps the entries of one split.
    pub fn split(&self, split: Split) -> Manifest {
        Manifest {
            root: self.root.clone(),
            actions: self.actions.clone(),
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
        }
    }
}

fn parse_entry(rest: &str, actions: &ActionSet, path: &Path, ln: usize) -> Result<ManifestEntry> {
    let mut fields: [Option<&str>; 7] = [None; 7];
    const KEYS: [&str; 7] = ["id", "recording", "split", "frames", "features", "labels", "transcript"];
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| SegError::parse(path, ln, format!("expected key=value, found {tok:?}")))?;
        let slot = KEYS
            .iter()
            .position(|&key| key == k)
            .ok_or_else(|| SegError::parse(path, ln, format!("unknown video field {k:?}")))?;
        if fields[slot].replace(v).is_some() {
            return Err(SegError::parse(path, ln, format!("field {k:?} given twice")));
        }
    }
    let get = |k: usize| fields[k].ok_or_else(|| SegError::parse(path, ln, format!("missing field {:?}", KEYS[k])));
    let split = Split::parse(get(2)?).ok_or_else(|| SegError::parse(path, ln, "split must be `train` or `test`"))?;
    let frames = parse_usize(get(3)?, path, ln, "frames")?;
    let transcript = get(6)?
        .split(',')
        .map(|name| {
            actions
                .index_of(name)
                .ok_or_else(|| SegError::parse(path, ln, format!("transcript names unknown action {name:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let transcript = Transcript::new(transcript).map_err(|e| SegError::parse(path, ln, e.to_string()))?;
    let labels = match fields[5] {
        None | Some("-") => None,
        Some(p) => Some(PathBuf::from(p)),
    };
    Ok(ManifestEntry {
        id: get(0)?.to_string(),
        recording: get(1)?.to_string(),
        split,
        frames,
        features: PathBuf::from(get(4)?),
        labels,
        transcript,
    })
}

/// Writes a generated dataset under `dir`: `manifest.txt`, `features/<id>.csv`
/// and `labels/<id>.txt`. Returns the manifest path.
pub fn write_synthetic(dir: &Path, synth: &Synthetic) -> Result<PathBuf> {
    let ds = &synth.dataset;
    let mut entries = Vec::with_capacity(ds.videos.len());
    for (v, gt) in ds.videos.iter().zip(&synth.ground_truth) {
        let features = PathBuf::from("features").join(format!("{}.csv", v.id));
        let labels = PathBuf::from("labels").join(format!("{}.txt", v.id));
        write_text(&dir.join(&features), &format_features(&v.features))?;
        write_text(&dir.join(&labels), &format_labels(&gt.expand(), &ds.actions))?;
        entries.push(ManifestEntry {
            id: v.id.clone(),
            recording: v.recording.clone(),
            split: v.split,
            frames: v.num_frames(),
            features,
            labels: Some(labels),
            transcript: v.transcript.clone(),
        });
    }
    let manifest = Manifest {
        root: dir.to_path_buf(),
        actions: ds.actions.clone(),
        entries,
    };
    let path = dir.join("manifest.txt");
    manifest.write(&path)?;
    Ok(path)
}

// ---- checkpoints ----

/// Everything needed for test-time inference, plus the WPI confidence network when trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub actions: ActionSet,
    /// Training transcripts; test-time decoding is constrained to this grammar.
    pub transcripts: Vec<Transcript>,
    pub model: LinearSoftmaxModel,
    pub durations: DurationModel,
    pub confidence: Option<ConfidenceNet>,
}

fn push_vector(out: &mut String, name: &str, v: &[f64]) {
    writeln!(out, "vector {name} {}", v.len()).expect("write to string");
    out.push_str(&join_values(v, " "));
    out.push('\n');
}

fn push_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols()).expect("write to string");
    for row in m.rows() {
        out.push_str(&join_values(row.iter(), " "));
        out.push('\n');
    }
}

impl Checkpoint {
    pub fn grammar(&self) -> Result<Grammar> {
        Grammar::new(self.transcripts.iter().cloned())
    }

    pub fn format(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC}\nactions {}\n", self.actions.labels().join(" "));
        if let Some(b) = self.actions.background() {
            writeln!(out, "background {}", self.actions.name(b)).expect("write to string");
        }
        for tr in &self.transcripts {
            writeln!(out, "transcript {}", transcript_names(tr, &self.actions)).expect("write to string");
        }
        push_matrix(&mut out, "classifier.weights", &self.model.weights);
        push_vector(
            &mut out,
            "classifier.bias",
            self.model.bias.as_slice().expect("contiguous"),
        );
        push_vector(&mut out, "durations.lambda", self.durations.lambdas());
        push_vector(&mut out, "durations.prior", self.durations.priors());
        if let Some(net) = &self.confidence {
            writeln!(out, "confidence {} {}", net.window, net.kernel).expect("write to string");
            push_matrix(&mut out, "confidence.conv_w", &net.conv_w);
            push_vector(
                &mut out,
                "confidence.conv_b",
                net.conv_b.as_slice().expect("contiguous"),
            );
            push_matrix(&mut out, "confidence.fc1_w", &net.fc1_w);
            push_vector(&mut out, "confidence.fc1_b", net.fc1_b.as_slice().expect("contiguous"));
            push_vector(&mut out, "confidence.fc2_w", net.fc2_w.as_slice().expect("contiguous"));
            push_vector(&mut out, "confidence.fc2_b", &[net.fc2_b]);
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Checkpoint> {
        let lines: Vec<(usize, &str)> = content_lines(text).collect();
        let mut pos = 0;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let l = lines.get(pos).copied();
            pos += 1;
            l.ok_or_else(|| {
                SegError::parse(
                    path,
                    lines.last().map_or(1, |l| l.0),
                    format!("unexpected end of file, expected {what}"),
                )
            })
        };
        let (ln, magic) = next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(SegError::parse(
                path,
                ln,
                format!("first line must be `{CHECKPOINT_MAGIC}`"),
            ));
        }
        let (ln, line) = next("actions")?;
        let names = line
            .strip_prefix("actions ")
            .ok_or_else(|| SegError::parse(path, ln, "expected `actions`"))?;
        let mut actions =
            ActionSet::new(names.split_whitespace()).map_err(|e| SegError::parse(path, ln, e.to_string()))?;
        let mut transcripts = Vec::new();
        let mut matrices: Vec<(String, Array2<f64>)> = Vec::new();
        let mut confidence_shape = None;
        while let Ok((ln, line)) = next("section") {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["background", name] => {
                    actions = actions
                        .with_background(name)
                        .map_err(|e| SegError::parse(path, ln, e.to_string()))?;
                }
                ["transcript", seq] => {
                    let tr = seq
                        .split(',')
                        .map(|n| {
                            actions
                                .index_of(n)
                                .ok_or_else(|| SegError::parse(path, ln, format!("unknown action {n:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    transcripts.push(Transcript::new(tr).map_err(|e| SegError::parse(path, ln, e.to_string()))?);
                }
                ["confidence", w, k] => {
                    confidence_shape = Some((parse_usize(w, path, ln, "window")?, parse_usize(k, path, ln, "kernel")?));
                }
                ["matrix" | "vector", name, dims @ ..] => {
                    let is_matrix = toks[0] == "matrix";
                    let (r, c) = match (is_matrix, dims) {
                        (true, [r, c]) => (parse_usize(r, path, ln, "rows")?, parse_usize(c, path, ln, "columns")?),
                        (false, [n]) => (1, parse_usize(n, path, ln, "length")?),
                        _ => return Err(SegError::parse(path, ln, "malformed block header")),
                    };
                    let mut data = Vec::with_capacity(r * c);
                    for _ in 0..r {
                        let (rl, row) = next("matrix row")?;
                        let before = data.len();
                        for v in row.split_whitespace() {
                            data.push(parse_f64(v, path, rl)?);
                        }
                        if data.len() - before != c {
                            return Err(SegError::parse(path, rl, format!("expected {c} values in {name}")));
                        }
                    }
                    let m = Array2::from_shape_vec((r, c), data).expect("shape checked");
                    matrices.push((name.to_string(), m));
                }
                _ => return Err(SegError::parse(path, ln, format!("unknown checkpoint line {line:?}"))),
            }
        }
        let mut take = |name: &str| -> Result<Array2<f64>> {
            let k = matrices
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| SegError::parse(path, 1, format!("missing block {name}")))?;
            Ok(matrices.swap_remove(k).1)
        };
        let row = |m: Array2<f64>| -> Array1<f64> { m.into_iter().collect() };
        let weights = take("classifier.weights")?;
        let bias = row(take("classifier.bias")?);
        if weights.nrows() != actions.len() || bias.len() != actions.len() {
            return Err(SegError::parse(
                path,
                1,
                "classifier shape does not match the action set",
            ));
        }
        let model = LinearSoftmaxModel { weights, bias };
        let lambda = row(take("durations.lambda")?).to_vec();
        let prior = row(take("durations.prior")?).to_vec();
        let durations = DurationModel::new(lambda, prior).map_err(|e| SegError::parse(path, 1, e.to_string()))?;
        let confidence = match confidence_shape {
            None => None,
            Some((window, kernel)) => Some(ConfidenceNet {
                window,
                kernel,
                conv_w: take("confidence.conv_w")?,
                conv_b: row(take("confidence.conv_b")?),
                fc1_w: take("confidence.fc1_w")?,
                fc1_b: row(take("confidence.fc1_b")?),
                fc2_w: row(take("confidence.fc2_w")?),
                fc2_b: take("confidence.fc2_b")?[[0, 0]],
            }),
        };
        if let Some((name, _)) = matrices.first() {
            return Err(SegError::parse(path, 1, format!("unexpected block {name}")));
        }
        if transcripts.is_empty() {
            return Err(SegError::parse(path, 1, "checkpoint has no transcripts"));
        }
        Ok(Checkpoint {
            actions,
            transcripts,
            model,
            durations,
            confidence,
        })
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        Checkpoint::parse(&read_text(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.format())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> SynthConfig {
        SynthConfig {
            num_transcripts: 2,
            recordings_per_transcript: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn features_round_trip_exactly() {
        let m = array![[0.1, -2.5e-300], [1.0 / 3.0, 7.0]];
        let p = Path::new("x.csv");
        assert_eq!(parse_features(&format_features(&m), p).unwrap(), m);
    }

    #[test]
    fn feature_errors_name_line_and_rule() {
        let p = Path::new("f.csv");
        let err = parse_features("2,2\n1,2\n3\n", p).unwrap_err().to_string();
        assert!(err.starts_with("f.csv:3:"), "{err}");
        let err = parse_features("3,1\n1\n2\n", p).unwrap_err().to_string();
        assert!(err.contains("T = 3"), "{err}");
        assert!(parse_features("1,1\nabc\n", p).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let s = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_synthetic(dir.path(), &s).unwrap();
        let m = Manifest::read(&path).unwrap();
        assert_eq!(m.load_dataset().unwrap(), s.dataset);
        for (i, gt) in s.ground_truth.iter().enumerate() {
            assert_eq!(m.load_ground_truth(i).unwrap().unwrap(), gt.expand());
        }
        assert_eq!(m.format(), read_text(&path).unwrap());
    }

    #[test]
    fn missing_feature_file_names_the_path() {
        let s = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_synthetic(dir.path(), &s).unwrap();
        let victim = dir
            .path()
            .join("features")
            .join(format!("{}.csv", s.dataset.videos[1].id));
        fs::remove_file(&victim).unwrap();
        let err = Manifest::read(&path).unwrap().load_dataset().unwrap_err().to_string();
        assert!(err.contains(&victim.display().to_string()), "{err}");
    }

    #[test]
    fn frame_count_mismatch_is_rejected() {
        let s = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_synthetic(dir.path(), &s).unwrap();
        let mut m = Manifest::read(&path).unwrap();
        m.entries[0].frames += 1;
        assert!(m.load_dataset().is_err());
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let p = Path::new("m.txt");
        let text = "onseg-manifest 1\nactions a b\nvideo id=x recording=r split=train frames=3 features=f.csv transcript=a,c\n";
        let err = Manifest::parse(text, p).unwrap_err().to_string();
        assert!(err.starts_with("m.txt:3:") && err.contains("\"c\""), "{err}");
        assert!(Manifest::parse("onseg-manifest 2\n", p).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let actions = ActionSet::new(["a", "b", "bg"]).unwrap().with_background("bg").unwrap();
        let model = LinearSoftmaxModel::random(3, 4, 0.7, &mut rng).unwrap();
        let durations = DurationModel::new(vec![3.5, 1.0 / 3.0, 9.0], vec![0.2, 0.3, 0.5]).unwrap();
        let cfg = crate::multiview::ConfidenceConfig {
            window: 5,
            kernel: 2,
            embed_dim: 3,
            hidden: 2,
        };
        let mut net = ConfidenceNet::new(4, &cfg, &mut rng).unwrap();
        net.fc2_w[1] = 0.125;
        for confidence in [None, Some(net)] {
            let ck = Checkpoint {
                actions: actions.clone(),
                transcripts: vec![
                    Transcript::new(vec![2, 0, 1, 2]).unwrap(),
                    Transcript::new(vec![1]).unwrap(),
                ],
                model: model.clone(),
                durations: durations.clone(),
                confidence,
            };
            let text = ck.format();
            let back = Checkpoint::parse(&text, Path::new("c")).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.format(), text);
        }
    }

    #[test]
    fn labels_round_trip_and_reject_unknown_names() {
        let actions = ActionSet::new(["x", "y"]).unwrap();
        let l = vec![0, 1, 1, 0];
        let p = Path::new("l.txt");
        assert_eq!(parse_labels(&format_labels(&l, &actions), &actions, p).unwrap(), l);
        let err = parse_labels("x\nz\n", &actions, p).unwrap_err().to_string();
        assert!(err.starts_with("l.txt:2:"), "{err}");
    }

    #[test]
    fn next_free_path_skips_existing() {
        let dir = tempfile::tempdir().unwrap();
        let a = next_free_path(dir.path(), "eval", "json");
        write_text(&a, "{}").unwrap();
        let b = next_free_path(dir.path(), "eval", "json");
        assert!(a.ends_with("eval-000.json") && b.ends_with("eval-001.json"));
    }
}
