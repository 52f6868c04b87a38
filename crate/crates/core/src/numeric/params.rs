//! Trainable parameter storage partitioned into owner groups.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Owner of a parameter tensor.
///
/// `Uim` is the intent-estimation network, `Die` the intent extraction and
/// similarity-enhanced branches, `Base` the embedding tables and CTR tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    #[serde(rename = "theta")]
    Uim,
    #[serde(rename = "eta")]
    Die,
    #[serde(rename = "phi")]
    Base,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Uim, ParamGroup::Die, ParamGroup::Base];

    pub fn symbol(self) -> &'static str {
        match self {
            ParamGroup::Uim => "theta",
            ParamGroup::Die => "eta",
            ParamGroup::Base => "phi",
        }
    }
}

/// Embedding tables receive sparse row updates; dense weights are copied
/// whole into each graph that uses them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Dense,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub kind: ParamKind,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

/// Initialization scheme for a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))
    Xavier,
    /// uniform(-0.01, 0.01)
    Embedding,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add(
        &mut self,
        name: impl Into<String>,
        group: ParamGroup,
        kind: ParamKind,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let len = rows * cols;
        let data = match init {
            Init::Zeros => vec![0.0; len],
            Init::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                (0..len).map(|_| rng.gen_range(-a..=a)).collect()
            }
            Init::Embedding => (0..len).map(|_| rng.gen_range(-0.01..=0.01)).collect(),
        };
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            group,
            kind,
            rows,
            cols,
            data,
        });
        ParamId(id)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: ParamGroup) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.group == group)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn count_in(&self, group: ParamGroup) -> usize {
        self.params.iter().filter(|p| p.group == group).count()
    }

    /// Copy of every value in a group, in registration order. Used for
    /// bit-equality assertions on frozen groups.
    pub fn snapshot(&self, group: ParamGroup) -> Vec<(String, Vec<f64>)> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| (p.name.clone(), p.data.clone()))
            .collect()
    }

    /// Overwrite the values of `name`, checking the shape.
    pub fn assign(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = &mut self.params[id.0];
        if p.rows != rows || p.cols != cols || data.len() != rows * cols {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: expected {}x{}, found {rows}x{cols} with {} values",
                p.rows,
                p.cols,
                data.len()
            )));
        }
        p.data = data;
        Ok(())
    }
}
