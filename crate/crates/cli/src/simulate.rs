//! `pmtc simulate`: Monte Carlo experiments and single-dataset exports.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pmtc::experiment::{run_experiment, summarize, write_outputs, ExperimentConfig, Model};
use pmtc::factors::write_loadings_csv;
use pmtc::io::{write_matrix_csv, write_tensor};
use pmtc::membership::Membership;
use pmtc::par::Exec;
use pmtc::simulate::{gen_pmtc, gen_subspace, gen_tensor_block};

use crate::failure::{CliResult, Failure};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::writing(path, e))
}

/// Runs the experiment and writes results, panels and prints the summary.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let output = run_experiment(cfg, Exec::Parallel)?;
    let written = write_outputs(out, cfg, &output).map_err(|e| Failure::writing(out, e))?;
    println!("experiment_id\tmethod\tmode\tmetric\tmean\tse\tn");
    for ((id, method, mode, metric), s) in summarize(&output.records) {
        println!("{id}\t{method}\t{mode}\t{metric}\t{:.6}\t{:.6}\t{}", s.mean, s.se, s.n);
    }
    Ok(written)
}

fn write_memberships(out: &Path, memberships: &[Membership], written: &mut Vec<PathBuf>) -> CliResult<()> {
    for (i, m) in memberships.iter().enumerate() {
        let path = out.join(format!("membership_mode{}.csv", i + 1));
        m.write_csv(create(&path)?)?;
        written.push(path);
    }
    Ok(())
}

/// Generates one dataset from the base model and writes it in the formats
/// `pmtc fit` reads, together with the ground truth.
pub fn export(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Failure::writing(out, e))?;
    let mut model = cfg.model.clone();
    model.set_seed(cfg.seed);
    let mut written = Vec::new();
    let (data, truth) = match &model {
        Model::Pmtc(d) => {
            let (data, truth) = gen_pmtc(d)?;
            (data, Some(truth))
        }
        Model::TensorBlock(d) => {
            let (data, truth) = gen_tensor_block(d)?;
            (data, Some(truth))
        }
        Model::Subspace(d) => (gen_subspace(d)?.0, None),
    };
    let tensor = out.join("x.pmtc");
    write_tensor(&data.x, create(&tensor)?)?;
    written.push(tensor);
    if let Some(y) = &data.y {
        let path = out.join("returns.csv");
        write_matrix_csv(y, None, create(&path)?)?;
        written.push(path);
    }
    if let Some(truth) = truth {
        write_memberships(out, &truth.memberships, &mut written)?;
        if data.y.is_some() {
            let factors = out.join("factors.csv");
            write_matrix_csv(&truth.factors, None, create(&factors)?)?;
            let loadings = out.join("loadings_true.csv");
            write_loadings_csv(&truth.loadings, create(&loadings)?)?;
            written.extend([factors, loadings]);
        }
    }
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(written)
}
