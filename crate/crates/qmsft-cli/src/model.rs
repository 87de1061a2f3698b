use std::path::Path;

use qmsft::linalg::{self, CMat};
use qmsft::models::{depolarizing_generator, load_model, parse_grid, wcd_generator};
use qmsft::qms::{build_generator, GeneratorPair};

use crate::{Failure, ModelArgs};

pub struct Loaded {
    pub name: String,
    pub gen: GeneratorPair,
}

pub fn load(args: &ModelArgs) -> Result<Loaded, Failure> {
    match args.model.as_str() {
        "wcd" => Ok(Loaded {
            name: format!("wcd-{}", args.n),
            gen: build_generator(&wcd_generator(args.n)?)?,
        }),
        "depolarizing" => {
            let total: f64 = args.sigma.iter().sum();
            if args.sigma.is_empty() || !(total > 0.0) {
                return Err(Failure::Input("--sigma needs a positive spectrum".into()));
            }
            let spec: Vec<f64> = args.sigma.iter().map(|s| s / total).collect();
            Ok(Loaded {
                name: format!("depolarizing-{}", spec.len()),
                gen: depolarizing_generator(&linalg::diag(&spec))?,
            })
        }
        path => {
            let text = read(Path::new(path))?;
            let spec = load_model(&text)?;
            Ok(Loaded {
                name: spec.name.clone(),
                gen: build_generator(&spec.lindbladian()?)?,
            })
        }
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

/// A `dim × dim` matrix stored as a JSON grid of `[re, im]` pairs.
pub fn load_matrix(path: &Path, dim: usize) -> Result<CMat, Failure> {
    let text = read(path)?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(parse_grid(&v, dim, "X")?)
}
