use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::Parser;
use rayon::prelude::*;
use serde_json::Value;
use thermnet::model::Model;

use crate::commands::{execute, load_model, Loaded};
use crate::manifest::{self, RunManifest};
use crate::{Cli, Command, Failure, SweepArgs};

#[derive(Debug, Parser)]
#[command(name = "thermnet sweep --")]
struct Inner {
    #[command(subcommand)]
    command: Command,
}

/// One step of a parameter path: a key, optionally followed by array
/// selectors (an index or an element id/name).
#[derive(Debug)]
struct Segment {
    key: String,
    selectors: Vec<String>,
}

fn parse_path(path: &str) -> anyhow::Result<Vec<Segment>> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        let mut selectors = Vec::new();
        while !rest.is_empty() {
            let close = rest.find(']').filter(|_| rest.starts_with('['));
            let Some(close) = close else { bail!("malformed selector in '{part}'") };
            selectors.push(rest[1..close].to_string());
            rest = &rest[close + 1..];
        }
        if key.is_empty() && out.is_empty() {
            bail!("empty path segment in '{path}'");
        }
        out.push(Segment {
            key: key.to_string(),
            selectors,
        });
    }
    Ok(out)
}

fn select<'a>(v: &'a mut Value, sel: &str) -> Option<&'a mut Value> {
    let arr = v.as_array_mut()?;
    if let Ok(i) = sel.parse::<usize>() {
        return arr.get_mut(i);
    }
    arr.iter_mut()
        .find(|e| e.get("id").and_then(Value::as_str) == Some(sel) || e.get("name").and_then(Value::as_str) == Some(sel))
}

/// Field addressed by `path` in a model document.
fn field<'a>(doc: &'a mut Value, path: &str) -> anyhow::Result<&'a mut Value> {
    let mut cur = doc;
    for seg in parse_path(path)? {
        if !seg.key.is_empty() {
            cur = cur
                .get_mut(&seg.key)
                .ok_or_else(|| anyhow!("invalid parameter path '{path}': no field '{}'", seg.key))?;
        }
        for s in &seg.selectors {
            cur = select(cur, s).ok_or_else(|| anyhow!("invalid parameter path '{path}': no element '{s}'"))?;
        }
    }
    Ok(cur)
}

/// Model text with the addressed field set to `value`.
fn substitute(text: &str, path: &str, value: &str) -> anyhow::Result<String> {
    let mut doc: Value = serde_json::from_str(text)?;
    let target = field(&mut doc, path)?;
    *target = match target {
        Value::Number(_) => {
            let x: f64 = value.parse().with_context(|| format!("'{value}' is not a number"))?;
            serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(|| anyhow!("'{value}' is not finite"))?
        }
        Value::String(_) => Value::String(value.to_string()),
        _ => bail!("invalid parameter path '{path}': not a numeric or enum field"),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn dir_name(value: &str) -> String {
    let clean: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "+-.".contains(c) { c } else { '_' })
        .collect();
    format!("value_{clean}")
}

/// Distinct values, numerically ordered when all are numbers.
fn ordered(values: &[String]) -> Vec<String> {
    let mut v: Vec<String> = values.iter().map(|s| s.trim().to_string()).collect();
    let numeric: Option<Vec<f64>> = v.iter().map(|s| s.parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => v.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap())),
        None => v.sort(),
    }
    v.dedup();
    v
}

pub fn run(cli: &Cli, args: &SweepArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    let started_at = manifest::unix_now();
    let base = load_model(cli.model.as_deref())?;
    let inner = Inner::try_parse_from(std::iter::once("sweep".to_string()).chain(args.inner.iter().cloned()))
        .map_err(|e| Failure::usage(anyhow!("inner command: {e}")))?;
    if matches!(inner.command, Command::Sweep(_)) {
        return Err(Failure::usage(anyhow!("sweeps cannot be nested")));
    }
    let values = ordered(&args.values);

    // build every variant before running anything
    let mut runs = Vec::new();
    for v in &values {
        let text = substitute(&base.text, &args.param, v).map_err(Failure::Usage)?;
        let model = Model::from_json(&text)
            .with_context(|| format!("model invalid with {} = {v}", args.param))
            .map_err(Failure::Usage)?;
        runs.push((v.clone(), text, model));
    }
    let report: Vec<String> = if args.report.is_empty() {
        base.model.nodes.iter().map(|n| n.id.clone()).collect()
    } else {
        args.report.clone()
    };
    if let Some(bad) = report.iter().find(|id| base.model.node(id).is_none()) {
        return Err(Failure::usage(anyhow!("unknown report node '{bad}'")));
    }

    let outcomes: Vec<Result<Option<Vec<(String, f64)>>, Failure>> = runs
        .into_par_iter()
        .map(|(v, text, model)| {
            let dir = cli.out.join(dir_name(&v));
            std::fs::create_dir_all(&dir).map_err(Failure::usage)?;
            let path = dir.join("model.json");
            std::fs::write(&path, &text).map_err(Failure::usage)?;
            let loaded = Loaded { path, text, model };
            execute(&loaded, &inner.command, &dir, cli.seed, cli.threads)
        })
        .collect();

    let mut csv = String::from("value,status,node_id,temperature_K\n");
    let mut failed = Vec::new();
    for (v, outcome) in values.iter().zip(&outcomes) {
        match outcome {
            Ok(t) => {
                let temps = t.clone().unwrap_or_default();
                for id in &report {
                    match temps.iter().find(|(n, _)| n == id) {
                        Some((_, t)) => writeln!(csv, "{v},ok,{id},{t}").unwrap(),
                        None => writeln!(csv, "{v},ok,{id},").unwrap(),
                    }
                }
            }
            Err(Failure::Usage(e)) | Err(Failure::Solver(e)) => {
                eprintln!("{} = {v}: {e:#}", args.param);
                failed.push(v.clone());
                writeln!(csv, "{v},failed,,").unwrap();
            }
        }
    }
    std::fs::write(cli.out.join("sweep_summary.csv"), csv).map_err(Failure::usage)?;

    let options = serde_json::to_value(&cli.command).expect("options serialize");
    let m = RunManifest {
        command: "sweep",
        model_file: base.path.display().to_string(),
        model_sha256: manifest::sha256_hex(base.text.as_bytes()),
        seed: cli.seed,
        threads: cli.threads,
        options,
        version: env!("CARGO_PKG_VERSION"),
        started_at,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        outputs: std::iter::once("sweep_summary.csv".to_string())
            .chain(values.iter().map(|v| dir_name(v)))
            .collect(),
    };
    manifest::write(&cli.out, &m).map_err(Failure::usage)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::solver(anyhow!("{} of {} runs failed", failed.len(), values.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"nodes":[{"id":"a","temperature":10.0},{"id":"b","kind":"boundary","temperature":3}],
        "loads":[{"id":"h","node":"a","power":1.0}],"materials":[{"name":"al","k":1}]}"#;

    #[test]
    fn substitutes_by_id_and_index() {
        let t = substitute(DOC, "nodes[b].temperature", "80").unwrap();
        let v: Value = serde_json::from_str(&t).unwrap();
        assert_eq!(v["nodes"][1]["temperature"], 80.0);
        let t = substitute(DOC, "loads[0].power", "0.006").unwrap();
        let v: Value = serde_json::from_str(&t).unwrap();
        assert_eq!(v["loads"][0]["power"], 0.006);
        let t = substitute(DOC, "materials[al].k", "2").unwrap();
        assert!(t.contains("\"k\": 2.0"));
        let t = substitute(DOC, "nodes[b].kind", "diffusion").unwrap();
        assert!(t.contains("\"diffusion\""));
    }

    #[test]
    fn rejects_bad_paths() {
        for p in ["nodes[zz].temperature", "nodes[a].capacity", "loads", "loads[h", "nodes[a].temperature.x"] {
            assert!(substitute(DOC, p, "1").is_err(), "{p}");
        }
        assert!(substitute(DOC, "nodes[a].temperature", "warm").is_err());
    }

    #[test]
    fn orders_values() {
        assert_eq!(ordered(&["12e-3".into(), "1e-3".into(), "6e-3".into(), "1e-3".into()]), ["1e-3", "6e-3", "12e-3"]);
        assert_eq!(ordered(&["nadir".into(), "fixed_inertial".into()]), ["fixed_inertial", "nadir"]);
    }
}
