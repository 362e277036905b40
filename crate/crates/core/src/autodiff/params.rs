use serde::{Deserialize, Serialize};

/// Index of a scalar slot in a [`ParameterStore`].
pub type ParamId = u32;

/// Optimizer group of a parameter; membership decides its learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    /// Per-frame occluder mask coefficients.
    Occluder,
    /// Material network weights and biases.
    Material,
    /// Environment pyramid texels (pre-exponentiation).
    Environment,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [
        ParamGroup::Occluder,
        ParamGroup::Material,
        ParamGroup::Environment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Occluder => "occluder",
            ParamGroup::Material => "material",
            ParamGroup::Environment => "environment",
        }
    }
}

/// Named contiguous run of parameters within one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub group: ParamGroup,
    pub start: ParamId,
    pub len: u32,
}

impl ParamBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start as usize..(self.start + self.len) as usize
    }
}

/// Flat storage for every optimizable scalar of a scene.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    values: Vec<f64>,
    blocks: Vec<ParamBlock>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block of `len` parameters initialized to `init` and returns
    /// its first id.
    pub fn allocate(&mut self, name: impl Into<String>, group: ParamGroup, len: usize, init: f64) -> ParamId {
        let start = self.values.len() as ParamId;
        self.values.resize(self.values.len() + len, init);
        self.blocks.push(ParamBlock {
            name: name.into(),
            group,
            start,
            len: len as u32,
        });
        start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn group_of(&self, id: ParamId) -> Option<ParamGroup> {
        self.blocks
            .iter()
            .find(|b| id >= b.start && id < b.start + b.len)
            .map(|b| b.group)
    }

    /// Group of every slot, in id order.
    pub fn group_map(&self) -> Vec<ParamGroup> {
        let mut out = Vec::with_capacity(self.values.len());
        for b in &self.blocks {
            out.extend(std::iter::repeat_n(b.group, b.len as usize));
        }
        out
    }

    /// Ids belonging to `group`.
    pub fn ids_in(&self, group: ParamGroup) -> Vec<ParamId> {
        self.blocks
            .iter()
            .filter(|b| b.group == group)
            .flat_map(|b| b.start..b.start + b.len)
            .collect()
    }

    pub fn zero_gradient(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }
}
