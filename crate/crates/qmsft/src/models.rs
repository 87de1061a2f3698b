//! Built-in generators and the JSON model format.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, kron, pauli_z, zeros, CMat, C64};
use crate::qms::{build_generator, GeneratorPair, Lindbladian};
use crate::structure::ConditionalExpectation;

pub const MAX_WCD_QUBITS: usize = 6;

/// `σ_z` acting on qubit `i` of `n`.
fn sigma_z_at(i: usize, n: usize) -> CMat {
    let mut out = identity(1);
    for j in 0..n {
        out = if j == i {
            kron(&out, &pauli_z())
        } else {
            kron(&out, &identity(2))
        };
    }
    out
}

/// Weakly collective decoherence on `n` qubits: one jump operator `Σ_i σ_z^{(i)}`.
pub fn wcd_generator(n: usize) -> Result<Lindbladian> {
    if n == 0 {
        return Err(Error::DomainError {
            what: "qubit count",
            value: 0.0,
        });
    }
    if n > MAX_WCD_QUBITS {
        return Err(Error::DimensionTooLarge(1 << n));
    }
    let d = 1 << n;
    let mut jump = zeros(d);
    for i in 0..n {
        jump += sigma_z_at(i, n);
    }
    Lindbladian::new(zeros(d), vec![jump])
}

/// `L_N = E_N − id`.
pub fn n_decoherent_generator(ce: &ConditionalExpectation) -> GeneratorPair {
    let d = ce.dim();
    GeneratorPair::from_heisenberg(ce.heisenberg().sub(&linalg::Superop::identity(d)))
}

/// `X ↦ Tr(σX) I − X`, realized with jump operators `√s_i |u_i⟩⟨u_j|`.
pub fn depolarizing_generator(sigma: &CMat) -> Result<GeneratorPair> {
    let e = linalg::herm_eig(sigma)?;
    if e.min() < 1e-12 {
        return Err(Error::SingularState(e.min()));
    }
    let d = sigma.nrows();
    let tr: f64 = e.values.iter().sum();
    let mut ops = Vec::with_capacity(d * d);
    for i in 0..d {
        let ui = e.vectors.column(i).into_owned();
        let w = (e.values[i] / tr).sqrt();
        for j in 0..d {
            let uj = e.vectors.column(j).into_owned();
            ops.push(&ui * uj.adjoint() * c(w));
        }
    }
    build_generator(&Lindbladian::new(zeros(d), ops)?)
}

/// External model description.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub dim: usize,
    pub hamiltonian: CMat,
    pub lindblad_ops: Vec<CMat>,
    pub metadata: Map<String, Value>,
}

impl ModelSpec {
    pub fn from_lindbladian(name: &str, model: &Lindbladian) -> Self {
        ModelSpec {
            name: name.to_string(),
            dim: model.dim,
            hamiltonian: model.hamiltonian.clone(),
            lindblad_ops: model.lindblad_ops.clone(),
            metadata: Map::new(),
        }
    }

    pub fn lindbladian(&self) -> Result<Lindbladian> {
        Lindbladian::new(self.hamiltonian.clone(), self.lindblad_ops.clone())
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            name: &'a str,
            dim: usize,
            hamiltonian: Vec<Vec<[f64; 2]>>,
            lindblad_ops: Vec<Vec<Vec<[f64; 2]>>>,
            metadata: &'a Map<String, Value>,
        }
        let doc = Doc {
            name: &self.name,
            dim: self.dim,
            hamiltonian: grid_of(&self.hamiltonian),
            lindblad_ops: self.lindblad_ops.iter().map(grid_of).collect(),
            metadata: &self.metadata,
        };
        serde_json::to_string_pretty(&doc).expect("model serialization")
    }
}

pub fn grid_of(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

fn schema(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        msg: msg.into(),
    }
}

pub(crate) fn serialize_grid_opt<S: serde::Serializer>(
    m: &Option<CMat>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    m.as_ref().map(grid_of).serialize(s)
}

/// Parse a `dim × dim` grid of `[re, im]` pairs (row-major).
pub fn parse_grid(v: &Value, dim: usize, path: &str) -> Result<CMat> {
    let rows = v
        .as_array()
        .ok_or_else(|| schema(path, "expected an array of rows"))?;
    if rows.len() != dim {
        return Err(schema(
            path,
            format!("expected {dim} rows, found {}", rows.len()),
        ));
    }
    let mut m = zeros(dim);
    for (i, row) in rows.iter().enumerate() {
        let rp = format!("{path}[{i}]");
        let row = row
            .as_array()
            .ok_or_else(|| schema(&rp, "expected an array of entries"))?;
        if row.len() != dim {
            return Err(schema(
                &rp,
                format!("expected {dim} entries, found {}", row.len()),
            ));
        }
        for (j, z) in row.iter().enumerate() {
            let zp = format!("{rp}[{j}]");
            let pair = z
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| schema(&zp, "expected [re, im]"))?;
            let re = pair[0]
                .as_f64()
                .ok_or_else(|| schema(&zp, "non-numeric real part"))?;
            let im = pair[1]
                .as_f64()
                .ok_or_else(|| schema(&zp, "non-numeric imaginary part"))?;
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

/// Parse and validate a model document.
pub fn load_model(text: &str) -> Result<ModelSpec> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| schema("", "top level must be an object"))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("name", "missing or not a string"))?
        .to_string();
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .filter(|&d| d > 0)
        .ok_or_else(|| schema("dim", "missing or not a positive integer"))? as usize;
    let h = obj
        .get("hamiltonian")
        .ok_or_else(|| schema("hamiltonian", "missing"))?;
    let hamiltonian = parse_grid(h, dim, "hamiltonian")?;
    let herm = linalg::hermiticity_residual(&hamiltonian);
    if herm > 1e-10 {
        return Err(schema(
            "hamiltonian",
            format!("not Hermitian (residual {herm:.3e})"),
        ));
    }
    let ops = obj
        .get("lindblad_ops")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("lindblad_ops", "missing or not an array"))?;
    let lindblad_ops = ops
        .iter()
        .enumerate()
        .map(|(k, op)| parse_grid(op, dim, &format!("lindblad_ops[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let metadata = match obj.get("metadata") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(schema("metadata", "must be an object")),
    };
    Ok(ModelSpec {
        name,
        dim,
        hamiltonian,
        lindblad_ops,
        metadata,
    })
}
