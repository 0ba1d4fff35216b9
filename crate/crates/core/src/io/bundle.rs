//! Versioned JSON weight bundle: a manifest describing every tensor plus the
//! tensors themselves as nested arrays.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterLayer;
use crate::error::{Error, Result};
use crate::harness::TinyModel;
use crate::matrix::DenseMatrix;

pub const BUNDLE_FORMAT: &str = "tropiprune-bundle";
pub const BUNDLE_VERSION: u32 = 1;

const FEATURIZER: &str = "featurizer";
const HEAD: &str = "head";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub a_shape: [usize; 2],
    pub b_shape: [usize; 2],
    pub up_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub d: usize,
    pub r: usize,
    /// `A` carries the down-projection bias as its last column.
    pub bias_merged: bool,
    pub layers: Vec<LayerEntry>,
    /// Shape of every tensor in the bundle, by name.
    pub shapes: BTreeMap<String, [usize; 2]>,
    /// Free-form provenance such as the pruning cell.
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightBundle {
    pub format: String,
    pub version: u32,
    pub manifest: Manifest,
    pub tensors: BTreeMap<String, DenseMatrix>,
}

fn shape(m: &DenseMatrix) -> [usize; 2] {
    [m.rows(), m.cols()]
}

fn layer_names(l: usize) -> (String, String, String) {
    (format!("adapter{l}.A"), format!("adapter{l}.B"), format!("adapter{l}.up_bias"))
}

impl WeightBundle {
    /// Bundle holding adapters only.
    pub fn from_adapters(adapters: &[AdapterLayer]) -> Result<Self> {
        let first = adapters.first().ok_or(Error::Empty("adapter list"))?;
        let (d, r) = (first.d(), first.r());
        let mut layers = Vec::new();
        let mut tensors = BTreeMap::new();
        for (l, layer) in adapters.iter().enumerate() {
            if layer.d() != d || layer.r() != r {
                return Err(Error::ShapeMismatch(format!("adapter {l} differs in d or r from adapter 0")));
            }
            let (an, bn, un) = layer_names(l);
            tensors.insert(an.clone(), layer.a().clone());
            tensors.insert(bn, layer.b().clone());
            if let Some(bias) = layer.up_bias() {
                tensors.insert(un, DenseMatrix::new(1, bias.len(), bias.to_vec())?);
            }
            layers.push(LayerEntry {
                name: format!("adapter{l}"),
                a_shape: shape(layer.a()),
                b_shape: shape(layer.b()),
                up_bias: layer.up_bias().is_some(),
            });
        }
        let shapes = tensors.iter().map(|(k, v)| (k.clone(), shape(v))).collect();
        Ok(Self {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            manifest: Manifest {
                d,
                r,
                bias_merged: true,
                layers,
                shapes,
                meta: BTreeMap::new(),
            },
            tensors,
        })
    }

    pub fn from_model(model: &TinyModel) -> Result<Self> {
        let mut b = Self::from_adapters(model.adapters())?;
        b.insert_tensor(FEATURIZER, model.featurizer().clone());
        b.insert_tensor(HEAD, model.head().clone());
        Ok(b)
    }

    fn insert_tensor(&mut self, name: &str, m: DenseMatrix) {
        self.manifest.shapes.insert(name.into(), shape(&m));
        self.tensors.insert(name.into(), m);
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.manifest.meta.insert(key.into(), value.into());
        self
    }

    /// Check format tag, version and that every manifest entry matches its tensor.
    pub fn validate(&self) -> Result<()> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::Format(format!("unknown bundle format {:?}", self.format)));
        }
        if self.version != BUNDLE_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {}", self.version)));
        }
        if !self.manifest.bias_merged {
            return Err(Error::Format("only bias-merged bundles are supported".into()));
        }
        if self.manifest.shapes.len() != self.tensors.len() {
            return Err(Error::Format("manifest and tensor lists differ".into()));
        }
        for (name, want) in &self.manifest.shapes {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::Format(format!("tensor {name} listed in manifest but missing")))?;
            if shape(t) != *want {
                return Err(Error::Format(format!("tensor {name} is {:?}, manifest says {want:?}", shape(t))));
            }
        }
        let (d, r) = (self.manifest.d, self.manifest.r);
        for (l, entry) in self.manifest.layers.iter().enumerate() {
            let (an, bn, un) = layer_names(l);
            if entry.a_shape != [r, d + 1] || entry.b_shape != [d, r] {
                return Err(Error::Format(format!("layer {} shapes disagree with d={d}, r={r}", entry.name)));
            }
            if self.manifest.shapes.get(&an) != Some(&entry.a_shape) || self.manifest.shapes.get(&bn) != Some(&entry.b_shape) {
                return Err(Error::Format(format!("layer {} tensors missing or misshapen", entry.name)));
            }
            if entry.up_bias != self.tensors.contains_key(&un) {
                return Err(Error::Format(format!("layer {} up_bias flag disagrees with tensors", entry.name)));
            }
        }
        Ok(())
    }

    pub fn adapters(&self) -> Result<Vec<AdapterLayer>> {
        self.validate()?;
        self.manifest
            .layers
            .iter()
            .enumerate()
            .map(|(l, entry)| {
                let (an, bn, un) = layer_names(l);
                let layer = AdapterLayer::new(self.tensors[&an].clone(), self.tensors[&bn].clone())?;
                if entry.up_bias {
                    layer.with_up_bias(self.tensors[&un].data().to_vec())
                } else {
                    Ok(layer)
                }
            })
            .collect()
    }

    /// Full model, if the bundle carries featurizer and head.
    pub fn model(&self) -> Result<TinyModel> {
        let adapters = self.adapters()?;
        let get = |name: &str| {
            self.tensors
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Format(format!("bundle has no {name} tensor")))
        };
        TinyModel::from_parts(get(FEATURIZER)?, adapters, get(HEAD)?)
    }

    /// Same bundle with adapter tensors replaced.
    pub fn with_adapters(&self, adapters: &[AdapterLayer]) -> Result<Self> {
        let mut out = Self::from_adapters(adapters)?;
        if out.manifest.d != self.manifest.d || out.manifest.r != self.manifest.r || adapters.len() != self.manifest.layers.len() {
            return Err(Error::ShapeMismatch("replacement adapters differ in shape".into()));
        }
        for (name, t) in &self.tensors {
            if !name.starts_with("adapter") {
                out.insert_tensor(name, t.clone());
            }
        }
        out.manifest.meta = self.manifest.meta.clone();
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("bundle: {e}")))?;
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&super::read_text(path)?).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ModelSpec;
    use proptest::prelude::*;

    fn model() -> TinyModel {
        TinyModel::init(&ModelSpec { d: 6, r: 2, layers: 2 }, 3, 2, 5).unwrap()
    }

    #[test]
    fn manifest_describes_shapes() {
        let b = WeightBundle::from_model(&model()).unwrap();
        assert_eq!((b.manifest.d, b.manifest.r), (6, 2));
        assert_eq!(b.manifest.shapes["adapter0.A"], [2, 7]);
        assert_eq!(b.manifest.shapes["adapter1.B"], [6, 2]);
        assert_eq!(b.manifest.shapes["featurizer"], [6, 4]);
        assert_eq!(b.manifest.shapes["head"], [2, 7]);
        b.validate().unwrap();
    }

    #[test]
    fn round_trip_model_and_file() {
        let m = model();
        let b = WeightBundle::from_model(&m).unwrap().with_meta("note", "x");
        let back = WeightBundle::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.model().unwrap(), m);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        b.save(&p).unwrap();
        assert_eq!(WeightBundle::load(&p).unwrap(), b);
        assert!(WeightBundle::load(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn adapters_only_bundle() {
        let layers = model().adapters().to_vec();
        let with_bias = vec![layers[0].clone().with_up_bias(vec![0.5; 6]).unwrap(), layers[1].clone()];
        let b = WeightBundle::from_adapters(&with_bias).unwrap();
        assert_eq!(b.adapters().unwrap(), with_bias);
        assert!(b.model().is_err());
        assert!(WeightBundle::from_adapters(&[]).is_err());
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let b = WeightBundle::from_model(&model()).unwrap();
        let mut bad = b.clone();
        bad.version = 99;
        assert!(bad.validate().is_err());
        let mut bad = b.clone();
        bad.manifest.shapes.insert("head".into(), [3, 3]);
        assert!(bad.validate().is_err());
        let mut bad = b.clone();
        bad.tensors.remove("adapter1.B");
        assert!(bad.validate().is_err());
        let mut bad = b.clone();
        bad.manifest.r = 3;
        assert!(bad.validate().is_err());
        assert!(WeightBundle::from_json("{").is_err());
        let text = b.to_json().unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(WeightBundle::from_json(&text).is_err());
    }

    #[test]
    fn with_adapters_keeps_rest() {
        let m = model();
        let b = WeightBundle::from_model(&m).unwrap();
        let zeroed: Vec<AdapterLayer> = m
            .adapters()
            .iter()
            .map(|l| l.with_params(l.a().map(|_| 0.0), l.b().map(|_| 0.0)).unwrap())
            .collect();
        let z = b.with_adapters(&zeroed).unwrap();
        assert_eq!(z.tensors["head"], b.tensors["head"]);
        assert_eq!(z.adapters().unwrap(), zeroed);
        assert!(b.with_adapters(&zeroed[..1]).is_err());
    }

    fn any_finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(-0.0),
            Just(f64::MIN_POSITIVE),
            Just(5e-324),
            Just(f64::MAX),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(any_finite(), 3 * 5 + 4 * 3)) {
            let a = DenseMatrix::new(3, 5, vals[..15].to_vec()).unwrap();
            let b = DenseMatrix::new(4, 3, vals[15..].to_vec()).unwrap();
            let layer = AdapterLayer::new(a, b).unwrap();
            let bundle = WeightBundle::from_adapters(std::slice::from_ref(&layer)).unwrap();
            let back = WeightBundle::from_json(&bundle.to_json().unwrap()).unwrap().adapters().unwrap();
            let bits = |m: &DenseMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(back[0].a()), bits(layer.a()));
            prop_assert_eq!(bits(back[0].b()), bits(layer.b()));
        }
    }
}
