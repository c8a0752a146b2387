//! Versioned binary model format.
//!
//! Little-endian throughout, `OOBFRST1` magic. Stores the trees, the full
//! in-bag multiplicity matrix, the training parameters, the master seed and
//! the training schema, so interval construction can run later against the
//! original data file without retraining.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::forest::split::{LevelMask, SplitRule};
use crate::forest::tree::{Node, Prediction, Tree};
use crate::forest::{FeatureKind, Forest, Schema, TreeParams};

const MAGIC: &[u8; 8] = b"OOBFRST1";

impl Forest {
    /// Writes the model to `path`. Output is byte-identical for identical
    /// forests.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot create {}: {e}", path.display()),
            ))
        })?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a model previously written by [`Forest::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot open {}: {e}", path.display()),
            ))
        })?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u8(w, match self.task {
            Task::Regression => 0,
            Task::Classification => 1,
        })?;
        write_u64(w, self.master_seed)?;
        write_u64(w, self.params.mtry as u64)?;
        write_u64(w, self.params.min_node_size as u64)?;
        match self.params.max_depth {
            None => write_u8(w, 0)?,
            Some(d) => {
                write_u8(w, 1)?;
                write_u64(w, d as u64)?;
            }
        }
        // Schema.
        write_u32(w, self.schema.feature_names.len() as u32)?;
        for (name, kind) in self
            .schema
            .feature_names
            .iter()
            .zip(&self.schema.feature_kinds)
        {
            write_str(w, name)?;
            match kind {
                FeatureKind::Numeric => write_u8(w, 0)?,
                FeatureKind::Categorical(levels) => {
                    write_u8(w, 1)?;
                    write_u32(w, levels.len() as u32)?;
                    for level in levels {
                        write_str(w, level)?;
                    }
                }
            }
        }
        write_str(w, &self.schema.response_name)?;
        write_u32(w, self.schema.classes.len() as u32)?;
        for class in &self.schema.classes {
            write_str(w, class)?;
        }
        // In-bag matrix.
        write_u32(w, self.inbag.len() as u32)?;
        write_u64(w, self.n_train() as u64)?;
        for bag in &self.inbag {
            for &m in bag {
                write_u32(w, m)?;
            }
        }
        // Trees.
        for tree in &self.trees {
            write_u32(w, tree.nodes.len() as u32)?;
            for node in &tree.nodes {
                match node {
                    Node::Leaf(Prediction::Real(v)) => {
                        write_u8(w, 0)?;
                        write_f64(w, *v)?;
                    }
                    Node::Leaf(Prediction::Label(l)) => {
                        write_u8(w, 1)?;
                        write_u32(w, *l)?;
                    }
                    Node::Split {
                        feature,
                        rule,
                        left,
                        right,
                    } => {
                        match rule {
                            SplitRule::Threshold(t) => {
                                write_u8(w, 2)?;
                                write_u32(w, *feature)?;
                                write_f64(w, *t)?;
                            }
                            SplitRule::Levels(mask) => {
                                write_u8(w, 3)?;
                                write_u32(w, *feature)?;
                                write_u32(w, mask.blocks().len() as u32)?;
                                for &b in mask.blocks() {
                                    write_u64(w, b)?;
                                }
                            }
                        }
                        write_u32(w, *left)?;
                        write_u32(w, *right)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Forest> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat(
                "not an oob-forest model file (bad magic)".into(),
            ));
        }
        let task = match read_u8(r)? {
            0 => Task::Regression,
            1 => Task::Classification,
            t => return Err(Error::ModelFormat(format!("unknown task tag {t}"))),
        };
        let master_seed = read_u64(r)?;
        let mtry = read_u64(r)? as usize;
        let min_node_size = read_u64(r)? as usize;
        let max_depth = match read_u8(r)? {
            0 => None,
            1 => Some(read_u64(r)? as usize),
            t => return Err(Error::ModelFormat(format!("unknown depth tag {t}"))),
        };
        let p = read_u32(r)? as usize;
        let mut feature_names = Vec::with_capacity(p);
        let mut feature_kinds = Vec::with_capacity(p);
        for _ in 0..p {
            feature_names.push(read_str(r)?);
            feature_kinds.push(match read_u8(r)? {
                0 => FeatureKind::Numeric,
                1 => {
                    let k = read_u32(r)? as usize;
                    let mut levels = Vec::with_capacity(k);
                    for _ in 0..k {
                        levels.push(read_str(r)?);
                    }
                    FeatureKind::Categorical(levels)
                }
                t => return Err(Error::ModelFormat(format!("unknown kind tag {t}"))),
            });
        }
        let response_name = read_str(r)?;
        let n_classes = read_u32(r)? as usize;
        let mut classes = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            classes.push(read_str(r)?);
        }
        let b = read_u32(r)? as usize;
        let n = read_u64(r)? as usize;
        if b == 0 || n == 0 {
            return Err(Error::ModelFormat("empty forest".into()));
        }
        let mut inbag = Vec::with_capacity(b);
        for _ in 0..b {
            let mut bag = Vec::with_capacity(n);
            for _ in 0..n {
                bag.push(read_u32(r)?);
            }
            inbag.push(bag);
        }
        let mut trees = Vec::with_capacity(b);
        for _ in 0..b {
            let n_nodes = read_u32(r)? as usize;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match read_u8(r)? {
                    0 => Node::Leaf(Prediction::Real(read_f64(r)?)),
                    1 => Node::Leaf(Prediction::Label(read_u32(r)?)),
                    tag @ (2 | 3) => {
                        let feature = read_u32(r)?;
                        let rule = if tag == 2 {
                            SplitRule::Threshold(read_f64(r)?)
                        } else {
                            let n_blocks = read_u32(r)? as usize;
                            let mut blocks = Vec::with_capacity(n_blocks);
                            for _ in 0..n_blocks {
                                blocks.push(read_u64(r)?);
                            }
                            SplitRule::Levels(LevelMask::from_blocks(blocks))
                        };
                        let left = read_u32(r)?;
                        let right = read_u32(r)?;
                        if left as usize >= n_nodes || right as usize >= n_nodes {
                            return Err(Error::ModelFormat("child index out of range".into()));
                        }
                        Node::Split {
                            feature,
                            rule,
                            left,
                            right,
                        }
                    }
                    t => return Err(Error::ModelFormat(format!("unknown node tag {t}"))),
                });
            }
            if nodes.is_empty() {
                return Err(Error::ModelFormat("tree with no nodes".into()));
            }
            trees.push(Tree { nodes });
        }
        Ok(Forest {
            trees,
            inbag,
            task,
            params: TreeParams {
                mtry,
                min_node_size,
                max_depth,
            },
            master_seed,
            schema: Schema {
                feature_names,
                feature_kinds,
                response_name,
                classes,
            },
        })
    }
}

fn write_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    Ok(w.write_all(s.as_bytes())?)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 24 {
        return Err(Error::ModelFormat("unreasonable string length".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::ModelFormat("invalid utf-8 string".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::datagen;
    use crate::forest::train_forest;

    #[test]
    fn round_trip_preserves_the_forest() {
        let data = datagen::spheres(30, 11).unwrap();
        let forest = train_forest(
            &data,
            8,
            &TreeParams::defaults(Task::Classification, 20),
            21,
        )
        .unwrap();
        let mut bytes = Vec::new();
        forest.write_to(&mut bytes).unwrap();
        let loaded = Forest::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(forest, loaded);
    }

    #[test]
    fn save_load_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let data = datagen::friedman(25, 4).unwrap();
        let forest =
            train_forest(&data, 5, &TreeParams::defaults(Task::Regression, 10), 6).unwrap();
        forest.save(&path).unwrap();
        let loaded = Forest::load(&path).unwrap();
        assert_eq!(forest, loaded);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let data = datagen::friedman(20, 4).unwrap();
        let forest =
            train_forest(&data, 4, &TreeParams::defaults(Task::Regression, 10), 6).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        forest.write_to(&mut a).unwrap();
        forest.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = Forest::read_from(&mut &b"NOTAFRST-extra-bytes"[..]).unwrap_err();
        assert!(matches!(err, Error::ModelFormat(_)));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let data = datagen::friedman(20, 4).unwrap();
        let forest =
            train_forest(&data, 4, &TreeParams::defaults(Task::Regression, 10), 6).unwrap();
        let mut bytes = Vec::new();
        forest.write_to(&mut bytes).unwrap();
        bytes.truncate(bytes.len() / 2);
        assert!(Forest::read_from(&mut bytes.as_slice()).is_err());
    }
}
