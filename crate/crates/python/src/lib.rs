use carleman::piecewise::lp_quasinorm_default;
use carleman::rational::parse_q;
use carleman::tower::{prop15_report, DecaySequence};
use carleman::{PiecewisePolynomial, Q};
use carleman_cli::{commands::COMMANDS, Format};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn rational(s: &str) -> PyResult<Q> {
    parse_q(s).ok_or_else(|| PyValueError::new_err(format!("not a rational: {s:?}")))
}

fn core_err(e: carleman::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Run a command such as `"tower prop15"` on config text.
///
/// Returns `(exit_code, report)`; `report` is JSON unless `format="csv"`.
#[pyfunction]
#[pyo3(signature = (command, config="", seed=0, format="json"))]
fn run(command: &str, config: &str, seed: u64, format: &str) -> PyResult<(i32, String)> {
    let format = match format {
        "json" => Format::Json,
        "csv" => Format::Csv,
        other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    };
    match carleman_cli::run(command, config, seed, format) {
        Ok(r) => Ok((r.status.exit_code(), r.body)),
        Err((3, msg)) => Err(PyValueError::new_err(msg)),
        Err((code, msg)) => Ok((code, serde_json::json!({ "error": msg }).to_string())),
    }
}

#[pyfunction]
fn commands() -> Vec<&'static str> {
    COMMANDS.to_vec()
}

/// `‖f‖_p` of the step function with values `values[i]` on
/// `[breaks[i], breaks[i+1]]`. Rationals are passed as strings.
#[pyfunction]
fn step_quasinorm(breaks: Vec<String>, values: Vec<String>, p: &str) -> PyResult<f64> {
    if breaks.len() != values.len() + 1 {
        return Err(PyValueError::new_err("need one more break than values"));
    }
    let b = breaks.iter().map(|s| rational(s)).collect::<PyResult<Vec<_>>>()?;
    let pieces = values
        .iter()
        .map(|s| rational(s).map(carleman::poly::Poly::constant))
        .collect::<PyResult<Vec<_>>>()?;
    let f = PiecewisePolynomial::new(b, pieces).map_err(core_err)?;
    let v = lp_quasinorm_default(&f, &rational(p)?).map_err(core_err)?;
    Ok(v.value.to_f64())
}

/// Closed-form check of the top derivative of a geometric tower, as JSON.
#[pyfunction]
fn top_derivative_report(s: &str, r: &str, n: usize, p: &str) -> PyResult<String> {
    let a = DecaySequence::geometric(rational(s)?, rational(r)?).map_err(core_err)?;
    let rep = prop15_report(&a, n, &rational(p)?).map_err(core_err)?;
    serde_json::to_string(&rep).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pycarleman(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(commands, m)?)?;
    m.add_function(wrap_pyfunction!(step_quasinorm, m)?)?;
    m.add_function(wrap_pyfunction!(top_derivative_report, m)?)?;
    Ok(())
}
