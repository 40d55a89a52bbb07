use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coarsebox::boxspace::{compare_towers, BoxSpace};
use coarsebox::cayley::{voltage_cover, GraphJson, SL2_FREE_GENERATORS};
use coarsebox::coarse_homotopy::classify_loops;
use coarsebox::coarse_pi1::detect_report;
use coarsebox::config::{Config, Format, BUDGET_ENV};
use coarsebox::reproduce::{reproduce, Mutation, PaperTable, Section};
use coarsebox::towers::{
    betti_ratio_sequence, congruence_tower_sl2, corint_tower, homology_tower, ramanujan_tower, rank_gradient,
    torus_tower, CongruenceFamily, Tower,
};
use coarsebox::{parse_presentation, CayleyQuotient, CoarseError, ErrorClass};

type Result<T> = std::result::Result<T, Failure>;

/// Anything that ends the process with a nonzero code.
#[derive(Debug)]
enum Failure {
    Lib(CoarseError),
    Io(String),
    /// The reproduction suite found a mismatch.
    Mismatch(usize),
}

impl From<CoarseError> for Failure {
    fn from(e: CoarseError) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(e) => match e.class() {
                ErrorClass::BadInput => 2,
                ErrorClass::Budget => 3,
                ErrorClass::Internal => 4,
            },
            Failure::Io(_) => 2,
            Failure::Mismatch(_) => 4,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Lib(e) => (e.kind(), e.to_string()),
            Failure::Io(m) => ("io", m.clone()),
            Failure::Mismatch(n) => ("reproduction_mismatch", format!("{n} row(s) FAIL")),
        };
        serde_json::json!({ "error": kind, "exit_code": self.code(), "message": message })
    }
}

#[derive(Debug, Parser)]
#[command(name = "coarsebox", version, about = "Coarse invariants of box spaces of finite quotients")]
struct Cli {
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: OutFormat,
    /// Largest graph any builder may materialize.
    #[arg(long, global = true, env = BUDGET_ENV)]
    vertex_budget: Option<u64>,
    #[arg(long, global = true)]
    oracle_state_budget: Option<u64>,
    #[arg(long, global = true)]
    oracle_edge_budget: Option<u64>,
    /// Reserved; every algorithm is deterministic.
    #[arg(long, global = true, hide = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a finite Cayley graph.
    #[command(subcommand)]
    Quotient(QuotientCmd),
    /// Systole, scale window and relator-filled homology of a quotient.
    Detect {
        #[arg(long)]
        presentation: PathBuf,
        #[arg(long)]
        quotient: PathBuf,
        /// Deeper quotient certifying the systole (non-free presentations).
        #[arg(long)]
        deep: Option<PathBuf>,
    },
    /// Enumerate r-loop classes up to a length bound.
    Oracle {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        r: u32,
        #[arg(long)]
        maxlen: usize,
    },
    /// Build a filtration with closed-form indices and ranks.
    Tower(TowerArgs),
    /// Look for a rank obstruction between two towers.
    Compare {
        #[arg(long)]
        t1: PathBuf,
        #[arg(long)]
        t2: PathBuf,
    },
    /// Rank gradient and Betti ratios of a tower, or basic data of a graph.
    Invariants {
        #[arg(long, conflicts_with = "graph", required_unless_present = "graph")]
        tower: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Lay graphs out as a box space; optionally measure one distance.
    Boxspace {
        #[arg(long, num_args = 1.., required = true)]
        graphs: Vec<PathBuf>,
        /// `i,u,j,v`: distance from vertex u of component i to v of component j.
        #[arg(long, value_delimiter = ',')]
        distance: Option<Vec<u64>>,
    },
    /// Regenerate the worked examples with PASS/FAIL per row.
    Paper {
        #[arg(value_parser = ["4.1", "4.4", "4.5", "all"])]
        section: String,
        /// Also write one file per table into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, hide = true)]
        mutate: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum QuotientCmd {
    /// Image of F2 in SL2(Z/m) under the standard generators.
    Sl2 {
        #[arg(long)]
        modulus: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Mod-m homology cover of a graph.
    Voltage {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        m: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Graph from explicit permutations (graph JSON).
    Perms {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cayley graph of a finite abelian group Z/m1 x ... x Z/mk.
    Abelian {
        #[arg(long, value_delimiter = ',', required = true)]
        moduli: Vec<u32>,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Write the graph here and print a summary instead.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TowerKind {
    N,
    M,
    Homology,
    Torus,
    Ramanujan,
    Corint,
}

#[derive(Debug, Args)]
struct TowerArgs {
    #[arg(long, value_enum)]
    kind: TowerKind,
    #[arg(long, default_value_t = 3)]
    depth: u64,
    /// Rank of the free group (homology towers).
    #[arg(long, default_value_t = 2)]
    n: u32,
    /// Homology modulus, or torus modulus.
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long, default_value_t = 29)]
    q: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write materialized levels as graph JSON here and reference them.
    #[arg(long)]
    graph_dir: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| {
        Failure::Lib(CoarseError::Parse {
            line: e.line(),
            message: format!("{}: {e}", path.display()),
        })
    })
}

fn load_graph(path: &Path) -> Result<CayleyQuotient> {
    Ok(CayleyQuotient::from_json(parse_json::<GraphJson>(path)?)?)
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn csv_table<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn only_json(format: Format, what: &str) -> Result<()> {
    match format {
        Format::Json => Ok(()),
        other => Err(Failure::Lib(CoarseError::InvalidArgument(format!(
            "{what} output is JSON only, not {other:?}"
        )))),
    }
}

#[derive(Serialize)]
struct GraphSummary {
    num_vertices: usize,
    num_edges: usize,
    diameter: u32,
    girth: Option<usize>,
    graph_betti: usize,
    provenance: String,
}

fn summary(g: &CayleyQuotient) -> GraphSummary {
    GraphSummary {
        num_vertices: g.num_vertices(),
        num_edges: g.num_edges(),
        diameter: g.diameter(),
        girth: g.girth_word().ok().map(|(n, _)| n),
        graph_betti: g.graph_betti(),
        provenance: g.provenance().to_string(),
    }
}

fn emit_graph(g: &CayleyQuotient, out: &OutArgs, format: Format) -> Result<String> {
    let text = match format {
        Format::Json => json(&g.to_json()),
        Format::Dot => g.to_dot(&[]),
        Format::Csv => csv_table(&[summary(g)])?,
    };
    match &out.out {
        Some(p) => {
            write(p, &text)?;
            Ok(json(&summary(g)))
        }
        None => Ok(text),
    }
}

fn quotient(cmd: &QuotientCmd, cfg: &Config) -> Result<String> {
    let (g, out) = match cmd {
        QuotientCmd::Sl2 { modulus, out } => (
            CayleyQuotient::from_matrices_sl2(*modulus, &SL2_FREE_GENERATORS, cfg.vertex_budget)?,
            out,
        ),
        QuotientCmd::Voltage { input, m, out } => {
            (voltage_cover(&load_graph(input)?, *m, cfg.vertex_budget)?.cover, out)
        }
        QuotientCmd::Perms { input, out } => (load_graph(input)?, out),
        QuotientCmd::Abelian { moduli, out } => (CayleyQuotient::abelian(moduli, cfg.vertex_budget)?, out),
    };
    emit_graph(&g, out, cfg.format)
}

#[derive(Serialize)]
struct TowerRow {
    level: u64,
    index: String,
    rank: String,
    materialized: bool,
    provenance: String,
}

fn tower(a: &TowerArgs, cfg: &Config) -> Result<String> {
    let budget = cfg.vertex_budget;
    let mut t = match a.kind {
        TowerKind::N => congruence_tower_sl2(CongruenceFamily::N, a.depth, budget)?,
        TowerKind::M => congruence_tower_sl2(CongruenceFamily::M, a.depth, budget)?,
        TowerKind::Homology => homology_tower(a.n, a.m, a.depth, budget)?,
        TowerKind::Torus => torus_tower(a.m, a.depth, budget)?,
        TowerKind::Ramanujan => ramanujan_tower(a.q, a.depth)?,
        TowerKind::Corint => corint_tower(a.q, a.depth)?,
    };
    if let Some(dir) = &a.graph_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        for l in &mut t.levels {
            if let Some(g) = &l.graph {
                let name = format!("{}.level{}.json", t.name, l.level);
                write(&dir.join(&name), &json(&g.to_json()))?;
                l.graph_file = Some(name);
            }
        }
    }
    let text = match cfg.format {
        Format::Json => json(&t),
        Format::Csv => {
            let rows: Vec<TowerRow> = t
                .levels
                .iter()
                .map(|l| TowerRow {
                    level: l.level,
                    index: l.index.to_string(),
                    rank: l.rank.as_ref().map(ToString::to_string).unwrap_or_default(),
                    materialized: l.materialized,
                    provenance: l.provenance.clone(),
                })
                .collect();
            csv_table(&rows)?
        }
        Format::Dot => return Err(CoarseError::InvalidArgument("towers have no DOT form".into()).into()),
    };
    match &a.out {
        Some(p) => {
            write(p, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn paper(section: &str, out_dir: Option<&Path>, mutate: Option<&str>, cfg: &Config) -> Result<(String, usize)> {
    let mutation = mutate.map(str::parse::<Mutation>).transpose()?;
    let sections: Vec<Section> = if section == "all" {
        Section::ALL.to_vec()
    } else {
        vec![section.parse()?]
    };
    let tables: Vec<PaperTable> = sections
        .into_iter()
        .map(|s| reproduce(s, cfg.vertex_budget, mutation))
        .collect::<coarsebox::Result<_>>()?;
    let render = |ts: &[PaperTable]| -> Result<String> {
        match cfg.format {
            Format::Csv => csv_table(&ts.iter().flat_map(|t| t.rows.iter()).collect::<Vec<_>>()),
            Format::Json => Ok(json(&ts)),
            Format::Dot => Err(CoarseError::InvalidArgument("tables have no DOT form".into()).into()),
        }
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        for t in &tables {
            let one = std::slice::from_ref(t);
            write(&dir.join(format!("paper_{}.json", t.section)), &json(&one))?;
            write(&dir.join(format!("paper_{}.csv", t.section)), &csv_table(&t.rows)?)?;
        }
    }
    let fails = tables.iter().flat_map(|t| &t.rows).filter(|r| r.status != coarsebox::reproduce::Status::Pass).count();
    Ok((render(&tables)?, fails))
}

fn run(cli: &Cli) -> Result<String> {
    let mut cfg = Config::default();
    if let Some(v) = cli.vertex_budget {
        cfg.vertex_budget = v;
    }
    if let Some(v) = cli.oracle_state_budget {
        cfg.oracle_state_budget = v;
    }
    if let Some(v) = cli.oracle_edge_budget {
        cfg.oracle_edge_budget = v;
    }
    cfg.format = match cli.format {
        OutFormat::Json => Format::Json,
        OutFormat::Csv => Format::Csv,
        OutFormat::Dot => Format::Dot,
    };
    cfg.validate()?;
    // Accepted so scripts can pass it; nothing is randomized.
    let _ = cli.seed;
    match &cli.command {
        Command::Quotient(q) => quotient(q, &cfg),
        Command::Detect { presentation, quotient, deep } => {
            only_json(cfg.format, "detect")?;
            let p = parse_presentation(&read(presentation)?)?;
            let x = load_graph(quotient)?;
            let deep = deep.as_deref().map(load_graph).transpose()?;
            let r = detect_report(&x, &p, deep.as_ref())?;
            Ok(json(&r))
        }
        Command::Oracle { graph, r, maxlen } => {
            only_json(cfg.format, "oracle")?;
            let x = load_graph(graph)?;
            let o = classify_loops(&x, *r, *maxlen, cfg.oracle_state_budget, cfg.oracle_edge_budget)?;
            Ok(json(o.report()))
        }
        Command::Tower(a) => tower(a, &cfg),
        Command::Compare { t1, t2 } => {
            only_json(cfg.format, "compare")?;
            let a: Tower = parse_json(t1)?;
            let b: Tower = parse_json(t2)?;
            Ok(json(&compare_towers(&a, &b)?))
        }
        Command::Invariants { tower, graph } => {
            only_json(cfg.format, "invariants")?;
            if let Some(t) = tower {
                let t: Tower = parse_json(t)?;
                let rg = if t.is_free() { Some(rank_gradient(&t)?) } else { None };
                let betti = betti_ratio_sequence(&t).ok();
                Ok(json(&serde_json::json!({
                    "tower": t.name,
                    "rank_gradient": rg,
                    "betti_ratios": betti,
                })))
            } else {
                let g = load_graph(graph.as_deref().expect("clap requires one"))?;
                Ok(json(&summary(&g)))
            }
        }
        Command::Boxspace { graphs, distance } => {
            only_json(cfg.format, "boxspace")?;
            let comps = graphs.iter().map(|p| load_graph(p)).collect::<Result<Vec<_>>>()?;
            let b = BoxSpace::assemble(comps)?;
            let mut v = serde_json::to_value(b.to_json()).expect("serializable");
            for (c, p) in v["components"].as_array_mut().expect("array").iter_mut().zip(graphs) {
                c["graph_file"] = serde_json::Value::String(p.display().to_string());
            }
            if let Some(d) = distance {
                if d.len() != 4 {
                    return Err(CoarseError::InvalidArgument("--distance takes i,u,j,v".into()).into());
                }
                let (i, u, j, w) = (d[0] as usize, d[1] as u32, d[2] as usize, d[3] as u32);
                v["distance"] = b.distance((i, u), (j, w))?.into();
            }
            Ok(json(&v))
        }
        Command::Paper { section, out_dir, mutate } => {
            let (text, fails) = paper(section, out_dir.as_deref(), mutate.as_deref(), &cfg)?;
            print!("{text}");
            if fails > 0 {
                return Err(Failure::Mismatch(fails));
            }
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}
