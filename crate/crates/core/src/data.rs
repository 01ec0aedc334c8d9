//! TU-format graph classification datasets.
//!
//! A dataset `DS` is a directory holding `DS_A.txt` (1-based `row, col` node
//! pairs of the block-diagonal adjacency), `DS_graph_indicator.txt` (graph
//! id per node), `DS_graph_labels.txt` (label per graph) and, optionally,
//! `DS_node_labels.txt` (label per node). Lines may end in LF or CRLF.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MAX_DEGREE: usize = 64;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    /// Directed edges in local node indices; undirected input stores both directions.
    pub edges: Vec<(usize, usize)>,
    pub features: Tensor,
    pub label: usize,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// How node features were derived at parse time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeFeatures {
    /// One-hot of the node label; column `i` stands for `values[i]`.
    Labels { values: Vec<i64> },
    /// One-hot of the node degree; degrees `>= cap` share the last column.
    Degree { cap: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Original label of class `i`, ascending.
    pub class_values: Vec<i64>,
    pub node_features: NodeFeatures,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn average_nodes(&self) -> f64 {
        self.graphs.iter().map(|g| g.num_nodes()).sum::<usize>() as f64 / self.len().max(1) as f64
    }

    /// Average undirected edge count, counting each stored pair once.
    pub fn average_edges(&self) -> f64 {
        self.graphs.iter().map(|g| g.edges.len()).sum::<usize>() as f64 / 2.0 / self.len().max(1) as f64
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label] += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TuOptions {
    pub max_degree: usize,
}

impl Default for TuOptions {
    fn default() -> Self {
        Self {
            max_degree: DEFAULT_MAX_DEGREE,
        }
    }
}

fn tu_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Non-empty trimmed lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<(String, Vec<(usize, String)>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })?;
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    Ok((file, lines))
}

fn parse_int(file: &str, line: usize, field: &str) -> Result<i64> {
    field.trim().parse::<i64>().map_err(|_| Error::Data {
        file: file.to_string(),
        line,
        message: format!("expected an integer, found {field:?}"),
    })
}

fn data_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// One-hot rows over the sorted distinct `values`.
fn one_hot(values: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let distinct: Vec<i64> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<i64, usize> = distinct.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    (distinct, values.iter().map(|v| index[v]).collect())
}

/// Directory holding `name`'s files: `root` itself, or `root/name`.
pub fn locate_tu(root: impl AsRef<Path>, name: &str) -> PathBuf {
    let root = root.as_ref();
    if tu_path(root, name, "A").exists() {
        root.to_path_buf()
    } else {
        root.join(name)
    }
}

pub fn parse_tu(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    parse_tu_with(dir, name, TuOptions::default())
}

pub fn parse_tu_with(dir: impl AsRef<Path>, name: &str, options: TuOptions) -> Result<Dataset> {
    let dir = dir.as_ref();
    let (ind_file, ind_lines) = read_lines(&tu_path(dir, name, "graph_indicator"))?;
    let (lab_file, lab_lines) = read_lines(&tu_path(dir, name, "graph_labels"))?;
    let (a_file, a_lines) = read_lines(&tu_path(dir, name, "A"))?;
    let node_label_path = tu_path(dir, name, "node_labels");
    let node_labels = if node_label_path.exists() {
        Some(read_lines(&node_label_path)?)
    } else {
        None
    };

    let mut raw_labels = Vec::with_capacity(lab_lines.len());
    for (line, text) in &lab_lines {
        raw_labels.push(parse_int(&lab_file, *line, text)?);
    }
    let num_graphs = raw_labels.len();
    if num_graphs == 0 {
        return Err(data_err(&lab_file, 0, "no graph labels"));
    }

    // node (0-based global) -> (graph, local index)
    let mut node_graph = Vec::with_capacity(ind_lines.len());
    let mut sizes = vec![0usize; num_graphs];
    for (line, text) in &ind_lines {
        let g = parse_int(&ind_file, *line, text)?;
        if g < 1 || g as usize > num_graphs {
            return Err(data_err(
                &ind_file,
                *line,
                format!("graph id {g} outside 1..={num_graphs}"),
            ));
        }
        let g = g as usize - 1;
        node_graph.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(data_err(&ind_file, 0, format!("graph {} has no nodes", empty + 1)));
    }
    let num_nodes = node_graph.len();

    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    for (line, text) in &a_lines {
        let mut parts = text.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(data_err(&a_file, *line, format!("expected `row, col`, found {text:?}")));
        };
        let (u, v) = (parse_int(&a_file, *line, a)?, parse_int(&a_file, *line, b)?);
        for x in [u, v] {
            if x < 1 || x as usize > num_nodes {
                return Err(data_err(
                    &a_file,
                    *line,
                    format!("dangling node index {x} (dataset has {num_nodes} nodes)"),
                ));
            }
        }
        let (gu, lu) = node_graph[u as usize - 1];
        let (gv, lv) = node_graph[v as usize - 1];
        if gu != gv {
            return Err(data_err(
                &a_file,
                *line,
                format!("edge joins graphs {} and {}", gu + 1, gv + 1),
            ));
        }
        edge_sets[gu].insert((lu, lv));
        edge_sets[gu].insert((lv, lu));
    }

    let (node_features, columns, hot): (NodeFeatures, usize, Vec<usize>) = match node_labels {
        Some((file, lines)) => {
            if lines.len() != num_nodes {
                return Err(data_err(
                    &file,
                    lines.last().map_or(0, |l| l.0),
                    format!("{} node labels for {num_nodes} nodes", lines.len()),
                ));
            }
            let mut values = Vec::with_capacity(num_nodes);
            for (line, text) in &lines {
                values.push(parse_int(&file, *line, text)?);
            }
            let (distinct, hot) = one_hot(&values);
            let cols = distinct.len();
            (NodeFeatures::Labels { values: distinct }, cols, hot)
        }
        None => {
            let cap = options.max_degree;
            let mut degree = vec![0usize; num_nodes];
            // global index of each (graph, local) pair
            let mut offsets = vec![0usize; num_graphs + 1];
            for g in 0..num_graphs {
                offsets[g + 1] = offsets[g] + sizes[g];
            }
            let mut global = vec![0usize; num_nodes];
            for (i, &(g, l)) in node_graph.iter().enumerate() {
                global[offsets[g] + l] = i;
            }
            for (g, set) in edge_sets.iter().enumerate() {
                for &(u, _) in set {
                    degree[global[offsets[g] + u]] += 1;
                }
            }
            let max_seen = degree.iter().copied().max().unwrap_or(0);
            let cols = max_seen.min(cap) + 1;
            let hot = degree.iter().map(|&d| d.min(cols - 1)).collect();
            (NodeFeatures::Degree { cap }, cols, hot)
        }
    };

    let (class_values, labels) = one_hot(&raw_labels);
    let mut features: Vec<Tensor> = sizes.iter().map(|&n| Tensor::zeros(n, columns)).collect();
    for (i, &(g, l)) in node_graph.iter().enumerate() {
        features[g].set(l, hot[i], 1.0);
    }
    let graphs = features
        .into_iter()
        .zip(edge_sets)
        .zip(labels)
        .map(|((features, edges), label)| Graph {
            edges: edges.into_iter().collect(),
            features,
            label,
        })
        .collect();

    Ok(Dataset {
        name: name.to_string(),
        graphs,
        num_classes: class_values.len(),
        feature_dim: columns,
        class_values,
        node_features,
    })
}

/// Writes `dataset` in TU layout under `dir`, using `dataset.name` as prefix.
pub fn write_tu(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = &dataset.name;
    let mut a = Vec::new();
    let mut ind = Vec::new();
    let mut labels = Vec::new();
    let mut node_labels = Vec::new();
    let mut offset = 0;
    for (gi, g) in dataset.graphs.iter().enumerate() {
        for &(u, v) in &g.edges {
            writeln!(a, "{}, {}", u + offset + 1, v + offset + 1)?;
        }
        for r in 0..g.num_nodes() {
            writeln!(ind, "{}", gi + 1)?;
            if let NodeFeatures::Labels { values } = &dataset.node_features {
                let hot = g.features.row(r).iter().position(|&x| x == 1.0).ok_or_else(|| {
                    Error::GraphData {
                        graph: gi,
                        message: format!("node {r} has no one-hot label"),
                    }
                })?;
                writeln!(node_labels, "{}", values[hot])?;
            }
        }
        writeln!(labels, "{}", dataset.class_values[g.label])?;
        offset += g.num_nodes();
    }
    fs::write(tu_path(dir, name, "A"), a)?;
    fs::write(tu_path(dir, name, "graph_indicator"), ind)?;
    fs::write(tu_path(dir, name, "graph_labels"), labels)?;
    if matches!(dataset.node_features, NodeFeatures::Labels { .. }) {
        fs::write(tu_path(dir, name, "node_labels"), node_labels)?;
    }
    Ok(())
}

/// Result of [`inject_noise`]; `warning` is set when noise was skipped.
#[derive(Clone, Debug)]
pub struct NoiseOutcome {
    pub output: Tensor,
    pub warning: Option<String>,
}

/// Zero-mean Gaussian noise at `snr_db` decibels relative to the mean squared
/// entry of `h`. `f64::INFINITY` disables noise.
pub fn noise_for(h: &Tensor, snr_db: f64, rng: &mut impl Rng) -> Result<Option<Tensor>> {
    if snr_db == f64::INFINITY {
        return Ok(None);
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("invalid SNR {snr_db} dB")));
    }
    let power = h.data().iter().map(|v| v * v).sum::<f64>() / h.len().max(1) as f64;
    if power.is_nan() || power <= 0.0 {
        return Ok(None);
    }
    let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(Some(Tensor::from_fn(h.rows(), h.cols(), |_, _| normal.sample(rng))))
}

pub fn inject_noise(h: &Tensor, snr_db: f64, seed: u64) -> Result<NoiseOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match noise_for(h, snr_db, &mut rng)? {
        Some(noise) => Ok(NoiseOutcome {
            output: h.add(&noise)?,
            warning: None,
        }),
        None if snr_db == f64::INFINITY => Ok(NoiseOutcome {
            output: h.clone(),
            warning: None,
        }),
        None => {
            let msg = "signal power is zero; noise injection skipped".to_string();
            log::warn!("{msg}");
            Ok(NoiseOutcome {
                output: h.clone(),
                warning: Some(msg),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_count: usize,
    /// Fold index of each graph.
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Stratified `k`-fold partition.
///
/// Classes are dealt round-robin in ascending order, each continuing where
/// the previous one stopped, so both per-class and total fold sizes differ by
/// at most one. Falls back to an unstratified deal when a class has fewer
/// than `k` members.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    make_folds_for_labels(&dataset.labels(), dataset.num_classes, k, seed)
}

pub fn make_folds_for_labels(labels: &[usize], num_classes: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > labels.len() {
        return Err(Error::Config(format!(
            "fold count {k} must be between 1 and the number of graphs ({})",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let stratified = by_class.iter().all(|members| members.len() >= k);
    let groups = if stratified {
        by_class
    } else {
        log::warn!("a class has fewer than {k} members; using unstratified folds");
        vec![(0..labels.len()).collect()]
    };
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for mut members in groups {
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan {
        fold_count: k,
        assignments,
        seed,
        stratified,
    })
}
