//! Python bindings. Structured results (reports, roles, traces) cross the
//! boundary as the same JSON documents the CLI emits, decoded into dicts.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use protosec::cli::DEFAULT_SEED;
use protosec::dsl::{parse_dsl, parse_message, Document};
use protosec::oracle::{
    bounded_attack_search, derives, probe_atoms, probe_full_invariance, AtomMetric, ConstantTop,
    OutermostKey, ProbeConfig, SearchConfig,
};
use protosec::{report, witness};
use protosec::{
    analyze_roles, encryption_patterns, extract_generalized_roles, Atom, GeneralizedRole, Message, Metric,
    Sort, Subject, Variable,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (v.to_string(),))?.unbind())
}

fn metric_of(name: &str) -> PyResult<Metric> {
    name.parse::<Metric>().map_err(value_error)
}

/// A message of the term algebra.
#[pyclass(module = "protosec", name = "Term", frozen, eq, hash, from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyTerm {
    inner: Message,
}

#[pymethods]
impl PyTerm {
    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Term('{}')", self.inner)
    }

    #[getter]
    fn is_ground(&self) -> bool {
        self.inner.is_ground()
    }

    fn atoms(&self) -> Vec<String> {
        self.inner.atoms().iter().map(|a| a.to_string()).collect()
    }

    fn variables(&self) -> Vec<String> {
        self.inner.vars().iter().map(|v| v.to_string()).collect()
    }

    /// `∂m`: the message with every variable erased.
    fn derive(&self) -> PyTerm {
        PyTerm { inner: self.inner.derive() }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("messages serialize")
    }
}

/// Most general unifier of two terms as `{variable: term}`, or `None`.
#[pyfunction]
fn unify(a: &PyTerm, b: &PyTerm) -> Option<HashMap<String, String>> {
    protosec::unify(&a.inner, &b.inner)
        .map(|s| s.iter().map(|(v, m)| (v.to_string(), m.to_string())).collect())
}

/// A parsed protocol description with its generalized roles.
#[pyclass(module = "protosec", name = "Protocol", frozen)]
struct PyProtocol {
    doc: Document,
    roles: Vec<GeneralizedRole>,
}

impl PyProtocol {
    fn build(doc: Document) -> PyResult<Self> {
        let roles = match &doc.roles {
            Some(r) => r.clone(),
            None => extract_generalized_roles(&doc.spec, &doc.context).map_err(value_error)?,
        };
        Ok(PyProtocol { doc, roles })
    }

    fn subject(&self, name: &str, m: &Message) -> PyResult<Subject> {
        m.subjects()
            .into_iter()
            .find(|s| s.to_string() == name)
            .or_else(|| {
                m.atoms().into_iter().find(|a| a.to_string() == name || a.name == name).map(Subject::Atom)
            })
            .ok_or_else(|| value_error(format!("{name} does not occur in {m}")))
    }

    fn atom(&self, name: &str) -> PyResult<Atom> {
        match parse_message(&self.doc, name, &[]).map_err(value_error)? {
            Message::Atom(a) => Ok(a),
            other => Err(value_error(format!("{other} is not an atom"))),
        }
    }
}

#[pymethods]
impl PyProtocol {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Self::build(parse_dsl(text).map_err(value_error)?)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyRuntimeError::new_err(format!("{}: {e}", path.display())))?;
        Self::build(parse_dsl(&text).map_err(|e| value_error(format!("{}:{e}", path.display())))?)
    }

    /// Same protocol, analyzed with roles from `roles --format json`.
    fn with_roles_json(&self, text: &str) -> PyResult<Self> {
        let roles = report::roles_from_json(text).map_err(value_error)?;
        Ok(PyProtocol { doc: self.doc.clone(), roles })
    }

    #[getter]
    fn principals(&self) -> Vec<String> {
        self.doc.context.principals().to_vec()
    }

    #[getter]
    fn intruder(&self) -> String {
        self.doc.context.intruder().to_string()
    }

    fn roles(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &report::roles_json(&self.roles))
    }

    fn roles_json(&self) -> String {
        report::roles_json(&self.roles).to_string()
    }

    fn roles_text(&self) -> String {
        report::roles_text(&self.roles, self.doc.context.intruder())
    }

    fn patterns(&self) -> Vec<String> {
        encryption_patterns(&self.roles).iter().map(|p| p.term.to_string()).collect()
    }

    /// Runs the increasing analysis; returns the JSON report as a dict.
    #[pyo3(signature = (metric = "witness"))]
    fn analyze(&self, py: Python<'_>, metric: &str) -> PyResult<Py<PyAny>> {
        let r = analyze_roles(&self.roles, metric_of(metric)?, &self.doc.context);
        to_py(py, &report::report_json(&r))
    }

    #[pyo3(signature = (metric = "witness"))]
    fn analyze_text(&self, metric: &str) -> PyResult<String> {
        let r = analyze_roles(&self.roles, metric_of(metric)?, &self.doc.context);
        Ok(report::report_text(&r))
    }

    /// Parses a message over this protocol's atoms. `variables` maps
    /// variable names to sorts.
    #[pyo3(signature = (text, variables = None))]
    fn term(&self, text: &str, variables: Option<HashMap<String, String>>) -> PyResult<PyTerm> {
        let mut vars = Vec::new();
        for (name, sort) in variables.unwrap_or_default() {
            vars.push(Variable::new(&name, sort.parse::<Sort>().map_err(value_error)?));
        }
        Ok(PyTerm { inner: parse_message(&self.doc, text, &vars).map_err(value_error)? })
    }

    /// `F_MAX^IK(subject, m)` as a string level.
    fn f_max_ik(&self, subject: &str, m: &PyTerm) -> PyResult<String> {
        let s = self.subject(subject, &m.inner)?;
        witness::f_max_ik(&s, &m.inner, &self.doc.context).map(|l| l.to_string()).map_err(value_error)
    }

    fn f_prime(&self, subject: &str, m: &PyTerm) -> PyResult<String> {
        let s = self.subject(subject, &m.inner)?;
        witness::f_prime(&s, &m.inner, &self.doc.context).map(|l| l.to_string()).map_err(value_error)
    }

    /// Lower bound of the witness-function over this protocol's patterns.
    fn lower_bound(&self, subject: &str, m: &PyTerm) -> PyResult<String> {
        let s = self.subject(subject, &m.inner)?;
        let patterns = encryption_patterns(&self.roles);
        witness::lower_bound(&s, &m.inner, &patterns, &self.doc.context)
            .map(|l| l.level.to_string())
            .map_err(value_error)
    }

    /// `knowledge ⊨ target`.
    fn derives(&self, knowledge: Vec<PyTerm>, target: &PyTerm) -> bool {
        let ms: Vec<Message> = knowledge.into_iter().map(|t| t.inner).collect();
        derives(&ms, &target.inner, &self.doc.context)
    }

    /// Full-invariance probe. Returns the counterexamples as dicts.
    #[pyo3(signature = (metric = "witness", trials = 1000, depth = 2, max_messages = 3, seed = DEFAULT_SEED))]
    fn probe(
        &self,
        py: Python<'_>,
        metric: &str,
        trials: usize,
        depth: usize,
        max_messages: usize,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let m: Box<dyn AtomMetric> = match metric {
            "constant_top" | "constant-top" => Box::new(ConstantTop),
            "outermost_key" | "outermost-key" => Box::new(OutermostKey),
            other => Box::new(metric_of(other)?),
        };
        let config = ProbeConfig { trials, depth, max_messages, seed, ..ProbeConfig::default() };
        let atoms = probe_atoms(&self.doc.spec, &self.doc.context);
        let found = probe_full_invariance(m.as_ref(), &self.doc.context, &atoms, &config);
        let doc = report::probe_json(&m.name(), &found);
        to_py(py, &doc["counterexamples"])
    }

    /// Bounded attack search; the trace dict or `None`.
    #[pyo3(signature = (secret, sessions = 2, node_cap = 200_000))]
    fn attack(&self, py: Python<'_>, secret: &str, sessions: u32, node_cap: usize) -> PyResult<Py<PyAny>> {
        let secret = self.atom(secret)?;
        let config = SearchConfig { sessions, node_cap };
        let trace = bounded_attack_search(&self.roles, &self.doc.context, &secret, &config)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let doc = report::trace_json(trace.as_ref(), self.doc.context.intruder());
        to_py(py, &doc["trace"])
    }
}

#[pymodule]
#[pyo3(name = "protosec")]
pub fn protosec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProtocol>()?;
    m.add_class::<PyTerm>()?;
    m.add_function(wrap_pyfunction!(unify, m)?)?;
    m.add("SCHEMA", report::SCHEMA)?;
    Ok(())
}
