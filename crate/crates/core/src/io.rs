//! CSV datasets and JSON models.
//!
//! Datasets use a header `x1,...,xd,y` with labels in `{-1, 1}`. Floats are
//! written in shortest round-trip form, so reading back is lossless.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::empirical::{ClassifierForm, Dataset, LabeledSample, SetClassifier};
use crate::error::{Error, Result};
use crate::forest::CompleteTree;
use crate::geometry::{check_dim, Cut, DyadicCube, HCell, Hyperplane, Point, Side};
use crate::select::Algorithm;

/// Rows of a point table, with labels when the last column is `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTable {
    pub dim: usize,
    pub points: Vec<Point>,
    pub labels: Option<Vec<i64>>,
}

fn parse_field(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Malformed(format!("row {row}, column {col}: {s:?} is not a number")))
}

fn parse_label(s: &str, row: usize) -> Result<i64> {
    let v = s.trim();
    let y = v
        .parse::<i64>()
        .or_else(|_| match v.parse::<f64>() {
            Ok(f) if f.fract() == 0.0 && f.abs() <= 1.0 => Ok(f as i64),
            _ => Err(()),
        })
        .map_err(|_| Error::Malformed(format!("row {row}: label {s:?} is not an integer")))?;
    if y != 1 && y != -1 {
        return Err(Error::InvalidLabel(y));
    }
    Ok(y)
}

pub fn read_points<R: Read>(reader: R) -> Result<PointTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyData);
    }
    let labeled = headers.iter().next_back() == Some("y");
    let dim = headers.len() - labeled as usize;
    if dim == 0 {
        return Err(Error::Malformed("no coordinate columns".into()));
    }
    let mut points = Vec::new();
    let mut labels = labeled.then(Vec::new);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != headers.len() {
            return Err(Error::Malformed(format!("row {row} has {} fields, expected {}", rec.len(), headers.len())));
        }
        let x = (0..dim).map(|c| parse_field(&rec[c], row, &headers[c])).collect::<Result<Vec<_>>>()?;
        points.push(Point::new(x)?);
        if let Some(ls) = labels.as_mut() {
            ls.push(parse_label(&rec[dim], row)?);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(PointTable { dim, points, labels })
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let table = read_points(reader)?;
    let labels = table.labels.ok_or_else(|| Error::Malformed("missing label column y".into()))?;
    Dataset::new(
        table.points.into_iter().zip(labels).map(|(x, y)| LabeledSample::new(x, y)).collect::<Result<Vec<_>>>()?,
    )
}

pub fn read_dataset_path(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

fn header(dim: usize, labeled: bool) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).chain(labeled.then(|| "y".to_string())).collect()
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(data.dim(), true))?;
    for s in data.samples() {
        w.write_record(s.x.coords().iter().map(|v| v.to_string()).chain(std::iter::once(s.y().to_string())))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_path(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data)
}

pub fn write_points<W: Write>(writer: W, points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(points.first().map_or(0, Point::dim), false))?;
    for p in points {
        w.write_record(p.coords().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels<W: Write>(writer: W, labels: &[i64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["y"])?;
    for y in labels {
        w.write_record([y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub m_star: usize,
    pub seed: u64,
    pub j_max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DecorationJson {
    normal: Vec<f64>,
    offset: f64,
    positive_side: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NodeJson {
    level: u32,
    index: Vec<u64>,
    is_leaf: bool,
    leaf_positive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoration: Option<DecorationJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GridJson {
    cells_per_axis: u64,
    positive: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelJson {
    dimension: usize,
    algorithm: Algorithm,
    nodes: Vec<NodeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridJson>,
    meta: ModelMeta,
}

fn tree_nodes(tree: &CompleteTree, mut leaf: impl FnMut(&DyadicCube) -> (bool, Option<DecorationJson>)) -> Vec<NodeJson> {
    // BTreeSet order on cubes is (level, index): breadth-first by address
    tree.cubes()
        .map(|q| {
            let is_leaf = tree.is_leaf(q);
            let (leaf_positive, decoration) = if is_leaf { leaf(q) } else { (false, None) };
            NodeJson { level: q.level(), index: q.index().to_vec(), is_leaf, leaf_positive, decoration }
        })
        .collect()
}

/// Serialize a classifier as pretty-printed JSON.
pub fn model_to_json(c: &SetClassifier, meta: ModelMeta) -> Result<String> {
    let (nodes, grid) = match &c.form {
        ClassifierForm::Plain { tree, positive } => (tree_nodes(tree, |q| (positive.contains(q), None)), None),
        ClassifierForm::Decorated { tree, cells } => (
            tree_nodes(tree, |q| match cells.get(q) {
                None => (false, None),
                Some(cell) => (
                    true,
                    cell.cut.as_ref().map(|cut| DecorationJson {
                        normal: cut.hyperplane.normal().to_vec(),
                        offset: cut.hyperplane.offset(),
                        positive_side: cut.side,
                    }),
                ),
            }),
            None,
        ),
        ClassifierForm::Grid { cells_per_axis, positive, .. } => (
            Vec::new(),
            Some(GridJson { cells_per_axis: *cells_per_axis, positive: positive.iter().cloned().collect() }),
        ),
    };
    let model = ModelJson { dimension: c.dim(), algorithm: c.algorithm, nodes, grid, meta };
    let mut s = serde_json::to_string_pretty(&model)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<(SetClassifier, ModelMeta)> {
    let model: ModelJson = serde_json::from_str(text)?;
    let dim = model.dimension;
    if dim == 0 {
        return Err(Error::Malformed("model dimension must be positive".into()));
    }
    let meta = model.meta;
    if model.algorithm == Algorithm::Uniform {
        let grid = model.grid.ok_or_else(|| Error::Malformed("uniform model without grid".into()))?;
        let c = SetClassifier::grid(dim, grid.cells_per_axis, grid.positive.into_iter().collect())?;
        return Ok((c, meta));
    }
    if model.grid.is_some() {
        return Err(Error::Malformed("grid given for a tree model".into()));
    }

    let mut cubes = Vec::with_capacity(model.nodes.len());
    let mut flagged = Vec::new();
    for node in model.nodes {
        let q = DyadicCube::new(node.level, node.index)?;
        check_dim(dim, q.dim())?;
        if !node.is_leaf && (node.leaf_positive || node.decoration.is_some()) {
            return Err(Error::Malformed(format!("internal node {q} carries leaf data")));
        }
        if node.is_leaf {
            flagged.push((q.clone(), node.leaf_positive, node.decoration));
        }
        cubes.push(q);
    }
    let tree = CompleteTree::from_cubes(dim, cubes)?;
    let leaves: BTreeSet<DyadicCube> = tree.leaves().into_iter().collect();
    if flagged.len() != leaves.len() || flagged.iter().any(|(q, ..)| !leaves.contains(q)) {
        return Err(Error::Malformed("leaf flags disagree with the tree shape".into()));
    }

    let c = match model.algorithm {
        Algorithm::Plain => {
            if flagged.iter().any(|(_, _, d)| d.is_some()) {
                return Err(Error::Malformed("plain model with decorations".into()));
            }
            let positive = flagged.into_iter().filter(|(_, p, _)| *p).map(|(q, ..)| q).collect();
            SetClassifier::plain(tree, positive, meta.m_star)?
        }
        _ => {
            let mut cells = BTreeMap::new();
            for (q, positive, deco) in flagged {
                if !positive {
                    if deco.is_some() {
                        return Err(Error::Malformed(format!("decoration on negative leaf {q}")));
                    }
                    continue;
                }
                let cut = deco
                    .map(|d| -> Result<Cut> {
                        Ok(Cut { hyperplane: Hyperplane::new(d.normal, d.offset)?, side: d.positive_side })
                    })
                    .transpose()?;
                cells.insert(q.clone(), HCell { cube: q, cut });
            }
            SetClassifier::decorated(tree, cells, meta.m_star)?
        }
    };
    Ok((c, meta))
}

pub fn save_model(path: &Path, c: &SetClassifier, meta: ModelMeta) -> Result<()> {
    std::fs::write(path, model_to_json(c, meta)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(SetClassifier, ModelMeta)> {
    model_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decorate::{decorated_energy, extract_decorated_classifier};
    use crate::dp::{compute_energy, extract_classifier};
    use crate::empirical::tests::z1;
    use crate::forest::build_forest;
    use crate::select::uniform_baseline;
    use proptest::prelude::*;

    fn roundtrip(c: &SetClassifier) {
        let meta = ModelMeta { m_star: c.budget, seed: 7, j_max: 16 };
        let text = model_to_json(c, meta).unwrap();
        let (back, m) = model_from_json(&text).unwrap();
        assert_eq!(&back, c);
        assert_eq!(m, meta);
        assert_eq!(model_to_json(&back, meta).unwrap(), text);
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let z = z1();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &z).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "x1,y\n0.1,-1\n0.3,-1\n0.6,1\n0.9,1\n");
        assert_eq!(read_dataset(&buf[..]).unwrap(), z);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_dataset(&b""[..]), Err(Error::EmptyData)));
        assert!(matches!(read_dataset(&b"x1,y\n"[..]), Err(Error::EmptyData)));
        assert!(matches!(read_dataset(&b"x1,y\n0.5,2\n"[..]), Err(Error::InvalidLabel(2))));
        assert!(matches!(read_dataset(&b"x1,y\nabc,1\n"[..]), Err(Error::Malformed(_))));
        assert!(matches!(read_dataset(&b"x1,y\n1.5,1\n"[..]), Err(Error::OutOfDomain { .. })));
        assert!(matches!(read_dataset(&b"x1\n0.5\n"[..]), Err(Error::Malformed(_))));
        assert!(read_dataset(&b"x1,y\n0.5,1,3\n"[..]).is_err());
        let t = read_points(&b"x1,x2\n0.5,0.25\n"[..]).unwrap();
        assert_eq!((t.dim, t.labels), (2, None));
    }

    #[test]
    fn model_roundtrips() {
        let z = z1();
        let f = build_forest(&z, 16).unwrap();
        let t = compute_energy(&f, 2);
        for m in 0..=2 {
            roundtrip(&extract_classifier(&f, &t, m).unwrap());
        }
        let dt = decorated_energy(&f, 2).unwrap();
        for m in 0..=2 {
            roundtrip(&extract_decorated_classifier(&f, &dt, m).unwrap());
        }
        roundtrip(&uniform_baseline(&z, 2).unwrap());
        roundtrip(&SetClassifier::empty(3));
    }

    #[test]
    fn model_layout() {
        let f = build_forest(&z1(), 16).unwrap();
        let c = extract_classifier(&f, &compute_energy(&f, 1), 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&model_to_json(&c, ModelMeta::default()).unwrap()).unwrap();
        assert_eq!(v["dimension"], 1);
        assert_eq!(v["algorithm"], "plain");
        let nodes = v["nodes"].as_array().unwrap();
        assert_eq!(nodes.len(), 3);
        assert_eq!(nodes[0]["is_leaf"], false);
        assert_eq!(nodes[2]["index"], serde_json::json!([1]));
        assert_eq!(nodes[2]["leaf_positive"], true);
        assert!(v["meta"]["m_star"].is_u64());
    }

    #[test]
    fn malformed_models() {
        assert!(model_from_json("{}").is_err());
        let bad = r#"{"dimension":1,"algorithm":"plain","nodes":[
            {"level":0,"index":[0],"is_leaf":false,"leaf_positive":false},
            {"level":1,"index":[0],"is_leaf":true,"leaf_positive":false}],
            "meta":{"m_star":1,"seed":0,"j_max":16}}"#;
        assert!(model_from_json(bad).is_err());
        let bad = r#"{"dimension":1,"algorithm":"plain","nodes":[
            {"level":0,"index":[0],"is_leaf":true,"leaf_positive":true,
             "decoration":{"normal":[1.0],"offset":0.5,"positive_side":1}}],
            "meta":{"m_star":0,"seed":0,"j_max":16}}"#;
        assert!(model_from_json(bad).is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_lossless(rows in prop::collection::vec((prop::collection::vec(0.0..=1.0f64, 2), prop::bool::ANY), 1..30)) {
            let z = Dataset::from_pairs(rows.into_iter().map(|(x, b)| (x, if b { 1 } else { -1 }))).unwrap();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &z).unwrap();
            prop_assert_eq!(read_dataset(&buf[..]).unwrap(), z);
        }

        #[test]
        fn decorated_models_roundtrip(rows in prop::collection::vec((prop::collection::vec(0.0..=1.0f64, 2), prop::bool::ANY), 1..14)) {
            let z = Dataset::from_pairs(rows.into_iter().map(|(x, b)| (x, if b { 1 } else { -1 }))).unwrap();
            let f = build_forest(&z, 4).unwrap();
            let t = decorated_energy(&f, 3).unwrap();
            let c = extract_decorated_classifier(&f, &t, 3).unwrap();
            roundtrip(&c);
        }
    }
}
