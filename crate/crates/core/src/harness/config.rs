//! Flat key-value run configuration: one `key = value` per line, `#`
//! comments, order free. Chosen over nested formats for diff-friendliness.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "GRAPHSPLIT_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    PhaseRetrieval,
    SparsePca,
    Lasso,
    Quadratic,
}

#[derive(Debug, Clone)]
pub enum GraphSpec {
    Ring,
    /// Explicit edge list plus cover node sets (all 1-based).
    Explicit {
        edges: Vec<(usize, usize)>,
        cover: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy)]
pub enum BetaChoice {
    Fixed(f64),
    /// Derived from estimated smoothness constants and the penalty condition.
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub enum Activation {
    Full,
    FixedCardinality(usize),
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Async,
    Sync,
    Drs,
    EquivalenceCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    /// Per-node i.i.d. standard Gaussian primal start (copies stacked, zero
    /// duals); breaks the symmetry that makes 0 stationary for some problems.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub graph: GraphSpec,
    pub n: usize,
    /// Per-node dimension as the problem defines it; phase retrieval signals
    /// are complex of dimension d, so the solver vectors live in R^{2d}.
    pub d: usize,
    pub m_per_agent: usize,
    pub noise_sigma: f64,
    pub entry_sigma: f64,
    pub lambda: f64,
    pub beta: BetaChoice,
    pub activation: Activation,
    pub iterations: usize,
    pub seed: u64,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    pub output_dir: PathBuf,
    pub mode: Mode,
    pub init: Init,
}

impl RunConfig {
    /// Output directory from the environment (or `./out`) unless the config
    /// overrides it.
    pub fn default_output_dir() -> PathBuf {
        std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: Some(lineno),
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim().to_string();
            if keys.contains_key(&key) {
                return Err(Error::Config {
                    line: Some(lineno),
                    msg: format!("duplicate key `{key}`"),
                });
            }
            keys.insert(key, (lineno, v.trim().to_string()));
        }
        Self::from_keys(keys)
    }

    fn from_keys(mut keys: BTreeMap<String, (usize, String)>) -> Result<RunConfig> {
        fn bad(line: usize, msg: String) -> Error {
            Error::Config {
                line: Some(line),
                msg,
            }
        }
        fn missing(key: &str) -> Error {
            Error::Config {
                line: None,
                msg: format!("missing required key `{key}`"),
            }
        }
        let mut take = |key: &str| keys.remove(key);
        let mut parse_num = |key: &str, default: Option<f64>| -> Result<f64> {
            match take(key) {
                Some((line, v)) => v
                    .parse::<f64>()
                    .map_err(|e| bad(line, format!("`{key}`: {e}"))),
                None => default.ok_or_else(|| missing(key)),
            }
        };

        let n = parse_num("n", None)? as usize;
        let d = parse_num("d", None)? as usize;
        let m_per_agent = parse_num("m_per_agent", Some(1.0))? as usize;
        let noise_sigma = parse_num("noise_sigma", Some(0.01))?;
        let entry_sigma = parse_num("entry_sigma", Some(1.0))?;
        let lambda = parse_num("lambda", Some(0.0))?;
        let iterations = parse_num("iterations", None)? as usize;
        let seed = parse_num("seed", Some(0.0))? as u64;
        let inner_tol = parse_num("inner_tol", Some(1e-9))?;
        let inner_max_iters = parse_num("inner_max_iters", Some(500.0))? as usize;

        let (pl, pv) = take("problem").ok_or_else(|| missing("problem"))?;
        let problem = match pv.as_str() {
            "phase_retrieval" => Problem::PhaseRetrieval,
            "sparse_pca" => Problem::SparsePca,
            "lasso" => Problem::Lasso,
            "quadratic" => Problem::Quadratic,
            other => return Err(bad(pl, format!("unknown problem `{other}`"))),
        };

        let graph = match take("graph") {
            Some((_, gv)) if gv == "explicit" => {
                let (el, ev) = take("edges").ok_or_else(|| missing("edges"))?;
                let edges = parse_edges(&ev).map_err(|msg| bad(el, msg))?;
                let (cl, cv) = take("cover").ok_or_else(|| missing("cover"))?;
                let cover = parse_cover(&cv).map_err(|msg| bad(cl, msg))?;
                GraphSpec::Explicit { edges, cover }
            }
            Some((_, gv)) if gv == "ring" => GraphSpec::Ring,
            Some((gl, gv)) => return Err(bad(gl, format!("unknown graph `{gv}`"))),
            None => GraphSpec::Ring,
        };

        let beta = match take("beta") {
            None => BetaChoice::Auto,
            Some((_, v)) if v == "auto" => BetaChoice::Auto,
            Some((line, v)) => {
                let b: f64 = v.parse().map_err(|e| bad(line, format!("`beta`: {e}")))?;
                if b <= 0.0 {
                    return Err(bad(line, "`beta` must be positive".into()));
                }
                BetaChoice::Fixed(b)
            }
        };

        let activation = match take("activation") {
            None => Activation::Full,
            Some((_, v)) if v == "full" => Activation::Full,
            Some((line, v)) => {
                if let Some(k) = v.strip_prefix("fixed:") {
                    let k: usize = k
                        .parse()
                        .map_err(|e| bad(line, format!("`activation`: {e}")))?;
                    Activation::FixedCardinality(k)
                } else if let Some(q) = v.strip_prefix("bernoulli:") {
                    let q: f64 = q
                        .parse()
                        .map_err(|e| bad(line, format!("`activation`: {e}")))?;
                    if !(q > 0.0 && q <= 1.0) {
                        return Err(bad(line, "bernoulli rate must be in (0, 1]".into()));
                    }
                    Activation::Bernoulli(q)
                } else {
                    return Err(bad(line, format!("unknown activation `{v}`")));
                }
            }
        };

        let mode = match take("mode") {
            None => Mode::Async,
            Some((_, v)) if v == "async" => Mode::Async,
            Some((_, v)) if v == "sync" => Mode::Sync,
            Some((_, v)) if v == "drs" => Mode::Drs,
            Some((_, v)) if v == "equivalence_check" => Mode::EquivalenceCheck,
            Some((line, v)) => return Err(bad(line, format!("unknown mode `{v}`"))),
        };

        let init = match take("init") {
            None => match problem {
                // 0 is a stationary symmetry point of the quartic and of the
                // sparse eigenvector objective; start random there.
                Problem::PhaseRetrieval | Problem::SparsePca => Init::Gaussian,
                _ => Init::Zero,
            },
            Some((_, v)) if v == "zero" => Init::Zero,
            Some((_, v)) if v == "gaussian" => Init::Gaussian,
            Some((line, v)) => return Err(bad(line, format!("unknown init `{v}`"))),
        };

        let output_dir = match take("output_dir") {
            Some((_, v)) => PathBuf::from(v),
            None => Self::default_output_dir(),
        };

        if let Some((key, (line, _))) = keys.into_iter().next() {
            return Err(bad(line, format!("unknown key `{key}`")));
        }

        let config = RunConfig {
            problem,
            graph,
            n,
            d,
            m_per_agent,
            noise_sigma,
            entry_sigma,
            lambda,
            beta,
            activation,
            iterations,
            seed,
            inner_tol,
            inner_max_iters,
            output_dir,
            mode,
            init,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: &str| Error::Config {
            line: None,
            msg: msg.into(),
        };
        if self.n == 0 || self.d == 0 || self.m_per_agent == 0 {
            return Err(err("n, d and m_per_agent must be positive"));
        }
        if self.iterations == 0 {
            return Err(err("iterations must be at least 1"));
        }
        if !(self.inner_tol > 0.0) || self.inner_max_iters == 0 {
            return Err(err("inner solver settings must be positive"));
        }
        if self.noise_sigma < 0.0 || self.entry_sigma < 0.0 || self.lambda < 0.0 {
            return Err(err("sigma and lambda values must be nonnegative"));
        }
        if let GraphSpec::Explicit { cover, .. } = &self.graph {
            if cover.is_empty() {
                return Err(err("explicit cover must list at least one node set"));
            }
        }
        if let Activation::FixedCardinality(k) = self.activation {
            if k == 0 {
                return Err(err("fixed activation cardinality must be at least 1"));
            }
        }
        Ok(())
    }

    /// One `key = value` per line; parses back to an equivalent config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let problem = match self.problem {
            Problem::PhaseRetrieval => "phase_retrieval",
            Problem::SparsePca => "sparse_pca",
            Problem::Lasso => "lasso",
            Problem::Quadratic => "quadratic",
        };
        out.push_str(&format!("problem = {problem}\n"));
        match &self.graph {
            GraphSpec::Ring => out.push_str("graph = ring\n"),
            GraphSpec::Explicit { edges, cover } => {
                out.push_str("graph = explicit\n");
                let e: Vec<String> = edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                out.push_str(&format!("edges = {}\n", e.join(",")));
                let c: Vec<String> = cover
                    .iter()
                    .map(|s| {
                        s.iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect();
                out.push_str(&format!("cover = {}\n", c.join(";")));
            }
        }
        out.push_str(&format!("n = {}\n", self.n));
        out.push_str(&format!("d = {}\n", self.d));
        out.push_str(&format!("m_per_agent = {}\n", self.m_per_agent));
        out.push_str(&format!("noise_sigma = {}\n", self.noise_sigma));
        out.push_str(&format!("entry_sigma = {}\n", self.entry_sigma));
        out.push_str(&format!("lambda = {}\n", self.lambda));
        match self.beta {
            BetaChoice::Auto => out.push_str("beta = auto\n"),
            BetaChoice::Fixed(b) => out.push_str(&format!("beta = {b}\n")),
        }
        match self.activation {
            Activation::Full => out.push_str("activation = full\n"),
            Activation::FixedCardinality(k) => out.push_str(&format!("activation = fixed:{k}\n")),
            Activation::Bernoulli(q) => out.push_str(&format!("activation = bernoulli:{q}\n")),
        }
        out.push_str(&format!("iterations = {}\n", self.iterations));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("inner_tol = {}\n", self.inner_tol));
        out.push_str(&format!("inner_max_iters = {}\n", self.inner_max_iters));
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        let mode = match self.mode {
            Mode::Async => "async",
            Mode::Sync => "sync",
            Mode::Drs => "drs",
            Mode::EquivalenceCheck => "equivalence_check",
        };
        out.push_str(&format!("mode = {mode}\n"));
        let init = match self.init {
            Init::Zero => "zero",
            Init::Gaussian => "gaussian",
        };
        out.push_str(&format!("init = {init}\n"));
        out
    }
}

fn parse_edges(text: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    text.split(',')
        .map(|pair| {
            let (a, b) = pair
                .trim()
                .split_once('-')
                .ok_or_else(|| format!("edge `{pair}` is not of the form a-b"))?;
            let a = a.trim().parse().map_err(|e| format!("edge `{pair}`: {e}"))?;
            let b = b.trim().parse().map_err(|e| format!("edge `{pair}`: {e}"))?;
            Ok((a, b))
        })
        .collect()
}

fn parse_cover(text: &str) -> std::result::Result<Vec<Vec<usize>>, String> {
    text.split(';')
        .map(|set| {
            set.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| format!("cover node `{v}`: {e}"))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# phase retrieval desk run
problem = phase_retrieval
graph = ring
n = 15
d = 8            # complex dimension
m_per_agent = 30
beta = auto
activation = fixed:9
iterations = 3000
seed = 7
mode = async
";

    #[test]
    fn parses_sample_config() {
        let c = RunConfig::parse_str(SAMPLE).unwrap();
        assert_eq!(c.problem, Problem::PhaseRetrieval);
        assert_eq!(c.n, 15);
        assert_eq!(c.d, 8);
        assert!(matches!(c.activation, Activation::FixedCardinality(9)));
        assert!(matches!(c.beta, BetaChoice::Auto));
        assert_eq!(c.mode, Mode::Async);
        assert_eq!(c.seed, 7);
        // Defaults fill in.
        assert_eq!(c.inner_max_iters, 500);
        assert_eq!(c.noise_sigma, 0.01);
    }

    #[test]
    fn render_round_trips() {
        let c = RunConfig::parse_str(SAMPLE).unwrap();
        let again = RunConfig::parse_str(&c.render()).unwrap();
        assert_eq!(c.render(), again.render());
    }

    #[test]
    fn explicit_graph_parses() {
        let text = "\
problem = quadratic
graph = explicit
edges = 1-2,1-3,1-4,2-4,3-4,3-5,4-6
cover = 1,2,3,4;3,5;4,6
n = 6
d = 2
iterations = 10
";
        let c = RunConfig::parse_str(text).unwrap();
        match &c.graph {
            GraphSpec::Explicit { edges, cover } => {
                assert_eq!(edges.len(), 7);
                assert_eq!(cover, &vec![vec![1, 2, 3, 4], vec![3, 5], vec![4, 6]]);
            }
            _ => panic!("expected explicit graph"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "problem = phase_retrieval\nn = 5\nd = four\niterations = 10\n";
        match RunConfig::parse_str(bad) {
            Err(Error::Config { line: Some(3), .. }) => {}
            other => panic!("expected line-3 config error, got {other:?}"),
        }
        let dup = "problem = lasso\nn = 5\nn = 6\nd = 2\niterations = 1\n";
        match RunConfig::parse_str(dup) {
            Err(Error::Config { line: Some(3), .. }) => {}
            other => panic!("expected duplicate-key error, got {other:?}"),
        }
        let unknown = "problem = lasso\nn = 5\nd = 2\niterations = 1\nfrobnicate = 3\n";
        assert!(matches!(RunConfig::parse_str(unknown), Err(Error::Config { .. })));
    }

    #[test]
    fn zero_iterations_rejected() {
        let text = "problem = lasso\nn = 5\nd = 2\niterations = 0\n";
        assert!(matches!(RunConfig::parse_str(text), Err(Error::Config { .. })));
    }
}
