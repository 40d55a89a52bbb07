//! Python bindings. Reports come back as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use coarsebox::boxspace::{compare_towers as compare_impl, verify_obstruction, BoxSpace as BoxImpl};
use coarsebox::cayley::{voltage_cover, GraphJson, SL2_FREE_GENERATORS};
use coarsebox::coarse_homotopy::{classify_loops as classify_impl, witness_reduce as reduce_impl};
use coarsebox::coarse_pi1::{detect_report, detect_window as window_impl};
use coarsebox::config::Config;
use coarsebox::reproduce::{reproduce_all, Mutation};
use coarsebox::towers::{self, CongruenceFamily};
use coarsebox::{CayleyQuotient, CoarseError, ErrorClass};

create_exception!(coarsebox, BudgetError, PyException);
create_exception!(coarsebox, ConsistencyError, PyException);

fn err(e: CoarseError) -> PyErr {
    match e.class() {
        ErrorClass::BadInput => PyValueError::new_err(e.to_string()),
        ErrorClass::Budget => BudgetError::new_err(e.to_string()),
        ErrorClass::Internal => ConsistencyError::new_err(e.to_string()),
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn budget() -> u64 {
    Config::default().vertex_budget
}

/// Finite Cayley graph stored as generator permutations.
#[pyclass(name = "CayleyQuotient", module = "coarsebox", from_py_object)]
#[derive(Clone)]
struct PyQuotient(CayleyQuotient);

#[pymethods]
impl PyQuotient {
    #[staticmethod]
    #[pyo3(signature = (modulus, budget=None))]
    fn sl2(modulus: u64, budget: Option<u64>) -> PyResult<Self> {
        CayleyQuotient::from_matrices_sl2(modulus, &SL2_FREE_GENERATORS, budget.unwrap_or_else(self::budget))
            .map(PyQuotient)
            .map_err(err)
    }

    #[staticmethod]
    fn abelian(moduli: Vec<u32>) -> PyResult<Self> {
        CayleyQuotient::abelian(&moduli, budget()).map(PyQuotient).map_err(err)
    }

    #[staticmethod]
    fn cycle(n: u32) -> PyResult<Self> {
        CayleyQuotient::cycle(n).map(PyQuotient).map_err(err)
    }

    #[staticmethod]
    fn bouquet(n: usize) -> Self {
        PyQuotient(CayleyQuotient::bouquet(n))
    }

    #[staticmethod]
    fn from_permutations(perms: Vec<Vec<u32>>, provenance: String) -> PyResult<Self> {
        CayleyQuotient::from_permutations(perms.len(), perms, provenance)
            .map(PyQuotient)
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let g: GraphJson = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        CayleyQuotient::from_json(g).map(PyQuotient).map_err(err)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0.to_json()).expect("serializable")
    }

    fn to_dot(&self) -> String {
        self.0.to_dot(&[])
    }

    /// Mod-`m` homology cover.
    #[pyo3(signature = (m, budget=None))]
    fn voltage_cover(&self, m: u32, budget: Option<u64>) -> PyResult<Self> {
        voltage_cover(&self.0, m, budget.unwrap_or_else(self::budget))
            .map(|c| PyQuotient(c.cover))
            .map_err(err)
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.0.num_vertices()
    }

    #[getter]
    fn n_generators(&self) -> usize {
        self.0.n_generators()
    }

    #[getter]
    fn provenance(&self) -> String {
        self.0.provenance().to_string()
    }

    fn graph_betti(&self) -> usize {
        self.0.graph_betti()
    }

    fn diameter(&self) -> u32 {
        self.0.diameter()
    }

    fn girth(&self) -> PyResult<usize> {
        self.0.girth_word().map(|(n, _)| n).map_err(err)
    }

    fn bfs_distances(&self, v: u32) -> PyResult<Vec<u32>> {
        if v as usize >= self.0.num_vertices() {
            return Err(PyValueError::new_err(format!("no vertex {v}")));
        }
        Ok(self.0.bfs_distances(v))
    }

    /// Vertex reached from 0 by a word such as "abAB".
    fn evaluate(&self, word: &str) -> PyResult<u32> {
        let w = coarsebox::Word::parse(word).map_err(|c| PyValueError::new_err(format!("bad letter {c:?}")))?;
        self.0.evaluate(&w, 0).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.num_vertices()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("CayleyQuotient({} vertices, {})", self.0.num_vertices(), self.0.provenance())
    }
}

/// Filtration with symbolic indices and ranks.
#[pyclass(name = "Tower", module = "coarsebox", skip_from_py_object)]
#[derive(Clone)]
struct PyTower(towers::Tower);

#[pymethods]
impl PyTower {
    #[staticmethod]
    #[pyo3(signature = (family, depth, budget=None))]
    fn congruence(family: &str, depth: u64, budget: Option<u64>) -> PyResult<Self> {
        let f = match family {
            "N" | "n" => CongruenceFamily::N,
            "M" | "m" => CongruenceFamily::M,
            other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
        };
        towers::congruence_tower_sl2(f, depth, budget.unwrap_or_else(self::budget))
            .map(PyTower)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n, m, depth, budget=None))]
    fn homology(n: u32, m: u32, depth: u64, budget: Option<u64>) -> PyResult<Self> {
        towers::homology_tower(n, m, depth, budget.unwrap_or_else(self::budget))
            .map(PyTower)
            .map_err(err)
    }

    #[staticmethod]
    fn torus(m: u32, depth: u64) -> PyResult<Self> {
        towers::torus_tower(m, depth, budget()).map(PyTower).map_err(err)
    }

    #[staticmethod]
    fn ramanujan(q: u64, depth: u64) -> PyResult<Self> {
        towers::ramanujan_tower(q, depth).map(PyTower).map_err(err)
    }

    #[staticmethod]
    fn corint(q: u64, depth: u64) -> PyResult<Self> {
        towers::corint_tower(q, depth).map(PyTower).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(PyTower)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("serializable")
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    /// Decimal strings, so huge values survive.
    fn indices(&self) -> Vec<String> {
        self.0
            .levels
            .iter()
            .map(|l| l.index.value().map_or_else(|| l.index.to_string(), |v| v.to_string()))
            .collect()
    }

    fn ranks(&self) -> Vec<Option<String>> {
        self.0
            .levels
            .iter()
            .map(|l| l.rank.as_ref().map(|r| r.value().map_or_else(|| r.to_string(), |v| v.to_string())))
            .collect()
    }

    /// Level graph when it was materialized.
    fn graph(&self, level: u64) -> Option<PyQuotient> {
        self.0
            .levels
            .iter()
            .find(|l| l.level == level)
            .and_then(|l| l.graph.clone())
            .map(PyQuotient)
    }

    fn rank_gradient(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &towers::rank_gradient(&self.0).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Tower({}, {} levels)", self.0.name, self.0.levels.len())
    }
}

/// Verdict dict; obstructions are re-validated on levels up to `samples`.
#[pyfunction]
#[pyo3(signature = (t1, t2, samples=1000))]
fn compare_towers(py: Python<'_>, t1: &PyTower, t2: &PyTower, samples: u64) -> PyResult<Py<PyAny>> {
    let v = compare_impl(&t1.0, &t2.0).map_err(err)?;
    if v.proof.is_some() {
        verify_obstruction(&v, &t1.0, &t2.0, samples).map_err(err)?;
    }
    to_py(py, &v)
}

#[pyfunction]
fn detect_window(k: u64, n: u64) -> Vec<u64> {
    window_impl(k, n)
}

#[pyfunction]
#[pyo3(signature = (quotient, presentation, deep=None))]
fn detect(py: Python<'_>, quotient: &PyQuotient, presentation: &str, deep: Option<&PyQuotient>) -> PyResult<Py<PyAny>> {
    let p = coarsebox::parse_presentation(presentation).map_err(err)?;
    to_py(py, &detect_report(&quotient.0, &p, deep.map(|d| &d.0)).map_err(err)?)
}

#[pyfunction]
fn classify_loops(py: Python<'_>, graph: &PyQuotient, r: u32, max_len: usize) -> PyResult<Py<PyAny>> {
    let c = Config::default();
    let o = classify_impl(&graph.0, r, max_len, c.oracle_state_budget, c.oracle_edge_budget).map_err(err)?;
    to_py(py, o.report())
}

/// Number of links in the validated homotopy from `word` to its reduction.
#[pyfunction]
fn witness_reduce(graph: &PyQuotient, word: Vec<i32>, r: u32) -> PyResult<usize> {
    let chain = reduce_impl(&graph.0, &word, 0, r).map_err(err)?;
    chain.validate(&graph.0).map_err(err)?;
    Ok(chain.links.len())
}

#[pyfunction]
fn boxspace(py: Python<'_>, graphs: Vec<PyQuotient>) -> PyResult<Py<PyAny>> {
    let b = BoxImpl::assemble(graphs.into_iter().map(|g| g.0).collect()).map_err(err)?;
    to_py(py, &b.to_json())
}

#[pyfunction]
#[pyo3(signature = (i, u, j, v, graphs))]
fn boxspace_distance(i: usize, u: u32, j: usize, v: u32, graphs: Vec<PyQuotient>) -> PyResult<u64> {
    let b = BoxImpl::assemble(graphs.into_iter().map(|g| g.0).collect()).map_err(err)?;
    b.distance((i, u), (j, v)).map_err(err)
}

/// Rows of every reproduced table.
#[pyfunction]
#[pyo3(signature = (mutate=None))]
fn paper(py: Python<'_>, mutate: Option<&str>) -> PyResult<Py<PyAny>> {
    let m = mutate.map(str::parse::<Mutation>).transpose().map_err(err)?;
    to_py(py, &reproduce_all(budget(), m).map_err(err)?)
}

#[pymodule]
#[pyo3(name = "coarsebox")]
fn coarsebox_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuotient>()?;
    m.add_class::<PyTower>()?;
    m.add("BudgetError", m.py().get_type::<BudgetError>())?;
    m.add("ConsistencyError", m.py().get_type::<ConsistencyError>())?;
    m.add_function(wrap_pyfunction!(compare_towers, m)?)?;
    m.add_function(wrap_pyfunction!(detect_window, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(classify_loops, m)?)?;
    m.add_function(wrap_pyfunction!(witness_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(boxspace, m)?)?;
    m.add_function(wrap_pyfunction!(boxspace_distance, m)?)?;
    m.add_function(wrap_pyfunction!(paper, m)?)?;
    Ok(())
}
