//! Versioned JSON weight checkpoints. Floats are written in shortest
//! round-trip form, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::model::{ModelState, Param};
use super::scalar::Scalar;
use crate::error::NnError;

pub const CHECKPOINT_FORMAT: &str = "mcal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct NamedLayer<S: Scalar> {
    index: usize,
    name: String,
    /// `[in_dim, out_dim]` of the weight matrix.
    shape: [usize; 2],
    weights: Vec<S>,
    bias: Vec<S>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct Checkpoint<S: Scalar> {
    format: String,
    version: u32,
    dtype: String,
    architecture: Architecture,
    layers: Vec<NamedLayer<S>>,
    init_snapshot: Vec<NamedLayer<S>>,
}

fn dtype<S: Scalar>() -> &'static str {
    std::any::type_name::<S>()
}

fn named<S: Scalar>(arch: &Architecture, params: &[Option<Param<S>>]) -> Vec<NamedLayer<S>> {
    params
        .iter()
        .enumerate()
        .filter_map(|(index, p)| {
            p.as_ref().map(|p| NamedLayer {
                index,
                name: format!("{}{}", arch.layers[index].name(), index),
                shape: [p.in_dim, p.out_dim],
                weights: p.weights.clone(),
                bias: p.bias.clone(),
            })
        })
        .collect()
}

fn unnamed<S: Scalar>(layers: Vec<NamedLayer<S>>, count: usize) -> Result<Vec<Option<Param<S>>>, NnError> {
    let mut out: Vec<Option<Param<S>>> = (0..count).map(|_| None).collect();
    for l in layers {
        let slot = out
            .get_mut(l.index)
            .ok_or_else(|| NnError::Checkpoint(format!("layer index {} out of range", l.index)))?;
        *slot = Some(Param {
            weights: l.weights,
            bias: l.bias,
            in_dim: l.shape[0],
            out_dim: l.shape[1],
        });
    }
    Ok(out)
}

pub fn to_json<S: Scalar>(model: &ModelState<S>) -> String {
    let arch = model.architecture();
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        dtype: dtype::<S>().to_string(),
        architecture: arch.clone(),
        layers: named(arch, model.params()),
        init_snapshot: named(arch, model.init_snapshot()),
    };
    serde_json::to_string(&ck).expect("checkpoint serialises")
}

pub fn from_json<S: Scalar>(text: &str) -> Result<ModelState<S>, NnError> {
    let ck: Checkpoint<S> =
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    if ck.dtype != dtype::<S>() {
        return Err(NnError::Checkpoint(format!(
            "checkpoint holds {} weights, {} requested",
            ck.dtype,
            dtype::<S>()
        )));
    }
    let count = ck.architecture.layers.len();
    let params = unnamed(ck.layers, count)?;
    let snapshot = unnamed(ck.init_snapshot, count)?;
    ModelState::from_parts(ck.architecture, params, snapshot)
}

pub fn save<S: Scalar>(model: &ModelState<S>, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path.as_ref(), to_json(model)).map_err(|e| NnError::Checkpoint(e.to_string()))
}

pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<ModelState<S>, NnError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let arch = Architecture::conv_net(Shape::new(8, 8, 1), 3, 4, 3, 2, 16, (0.25, 0.5));
        let mut m = ModelState::<f32>::init(arch, 7).unwrap();
        let x = vec![0.5f32; 64];
        let (_, g) = m
            .loss_and_grads(&x, &[2], 0.01, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        m.apply_sgd(&g, 0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        save(&m, &path).unwrap();
        let back: ModelState<f32> = load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.weights_digest(), m.weights_digest());
        assert!(from_json::<f64>(&to_json(&m)).is_err());
    }
}
