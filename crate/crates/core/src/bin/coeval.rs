use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coeval::eval::isomorphic;
use coeval::project::{self, Project, RunError, RunOptions};
use coeval::rdf::import_ntriples;

/// Relational-to-RDF migration by query co-evaluation.
#[derive(Parser)]
#[command(name = "coeval", version)]
struct Cli {
    /// Output directory (overrides the project's `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Predicate for compiled type triples.
    #[arg(long = "type-predicate", global = true, value_name = "IRI")]
    type_predicate: Option<String>,
    /// Treat warnings as errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, compile if needed, co-evaluate, export and round-trip.
    Run { config: PathBuf },
    /// Load and check the CSV inputs.
    Ingest { config: PathBuf },
    /// Compile the project's mapping into one .cq file per table.
    Compile { config: PathBuf },
    /// Co-evaluate and write triples.nt and provenance.json.
    Coeval { config: PathBuf },
    /// Co-evaluate, evaluate back, and report the round trip.
    Roundtrip { config: PathBuf },
    /// Check the foreign-key query homomorphisms.
    CheckHom { config: PathBuf },
    /// Compare two N-Triples files up to blank-node renaming.
    Iso { a: PathBuf, b: PathBuf },
}

fn warn(diags: &[coeval::Diagnostic]) {
    for d in diags {
        eprintln!("warning: {d}");
    }
}

fn list(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn read_nt(path: &Path) -> Result<coeval::coeval::TripleInstance, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    import_ntriples(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<ExitCode, RunError> {
    let opts = RunOptions {
        out: cli.out,
        type_predicate: cli.type_predicate,
        strict: cli.strict,
    };
    match cli.command {
        Command::Run { config } => {
            let r = project::run(Project::load(&config)?, &opts)?;
            warn(&r.loaded.warnings);
            println!(
                "{} triple(s), {} blank node(s)",
                r.coeval.instance.fact_count(),
                r.coeval.instance.blank_count()
            );
            print!("{}", project::roundtrip_table(&r.roundtrip, &r.loaded));
            list(&r.files);
        }
        Command::Ingest { config } => {
            let p = Project::load(&config)?;
            let (inst, mut warnings) = project::ingest(&p)?;
            warnings.splice(0..0, p.warnings.iter().cloned());
            warn(&warnings);
            if opts.strict && !warnings.is_empty() {
                return Err(RunError::Strict(warnings));
            }
            for t in inst.schema().tables() {
                println!("{}: {} row(s)", t.name, inst.row_count(&t.name));
            }
        }
        Command::Compile { config } => {
            let p = Project::load(&config)?;
            warn(&p.warnings);
            if opts.strict && !p.warnings.is_empty() {
                return Err(RunError::Strict(p.warnings));
            }
            let c = project::compile(&p, &opts)?;
            let out = opts.out.clone().unwrap_or(p.out.clone());
            list(&project::write_compiled(&c, &out)?);
        }
        Command::Coeval { config } => {
            let loaded = project::load(Project::load(&config)?, &opts)?;
            warn(&loaded.warnings);
            let co = loaded.coevaluate()?;
            println!(
                "{} triple(s), {} blank node(s)",
                co.instance.fact_count(),
                co.instance.blank_count()
            );
            list(&project::write_coeval(&co, &loaded.out)?);
        }
        Command::Roundtrip { config } => {
            let loaded = project::load(Project::load(&config)?, &opts)?;
            warn(&loaded.warnings);
            let co = loaded.coevaluate()?;
            let rt = loaded.roundtrip(&co)?;
            print!("{}", project::roundtrip_table(&rt, &loaded));
            list(&[project::write_roundtrip(&rt, &loaded, &co, &loaded.out)?]);
        }
        Command::CheckHom { config } => {
            let loaded = project::load(Project::load(&config)?, &opts)?;
            warn(&loaded.warnings);
            println!("ok: {} homomorphism(s)", loaded.homs.len());
            for h in &loaded.homs {
                let pairs: Vec<String> = h.var_map.iter().map(|(k, v)| format!("{k} -> {v}")).collect();
                println!("  {} -> {}: {}", h.from_query, h.to_query, pairs.join(", "));
            }
        }
        Command::Iso { a, b } => {
            if isomorphic(&read_nt(&a)?, &read_nt(&b)?) {
                println!("isomorphic");
            } else {
                println!("not isomorphic");
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
