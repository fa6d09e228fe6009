use std::collections::HashMap;

use rand::Rng;

use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

/// One named parameter array, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// All model parameters in a stable order.
///
/// Values are held as `f64` so gradient checks can run at full precision;
/// trained parameters are kept on the `f32` grid (see [`ParameterSet::round_to_f32`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn from_params(params: Vec<Param>) -> Self {
        let index = params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        Self { params, index }
    }

    pub(crate) fn initialize(specs: &[ParamSpec], seed: u64) -> Self {
        let mut rng = stream(seed, "init");
        let params = specs
            .iter()
            .map(|s| {
                let n = s.rows * s.cols;
                let data = match s.init {
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                    Init::Uniform { fan_in } => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                    }
                };
                Param {
                    name: s.name.clone(),
                    rows: s.rows,
                    cols: s.cols,
                    data,
                }
            })
            .collect();
        let mut set = Self::from_params(params);
        set.round_to_f32();
        set
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    /// Snaps every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            p.data.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }
}
