//! The `twin` pipeline: simulate → benchmark → LSE windows → bias reports →
//! optional MLP → spectral analytics, each stage writing its artifacts
//! before the next starts.

use std::path::Path;

use gridtwin::analytics::{bias_spectrum, BiasSpectrum};
use gridtwin::estimation::{
    benchmark_jacobian_with, bias_report, lse_jacobian, BiasReport, JacobianBenchmark, OutlierRule,
};
use gridtwin::io::matrix_to_csv;
use gridtwin::network::{parse_case, Network};
use gridtwin::neural::{relative_rmse, train};
use gridtwin::powerflow::{solve_powerflow, PowerFlowOptions};
use gridtwin::telemetry::{
    form_deltas, series_to_csv, simulate_series, standardize, TelemetrySeries,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{sha256_hex, ArtifactWriter, Failure, Manifest, Seeds};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct WindowSummary {
    pub window: usize,
    pub frobenius_rel: f64,
    pub max_abs: f64,
    pub outliers: usize,
    pub top_outlier: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceError {
    pub label: String,
    pub relative_rmse: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MlpSummary {
    pub final_loss: Option<f64>,
    /// Per injection over the test range.
    pub test_relative_rmse: Vec<TraceError>,
    pub chain_rule_frobenius_rel: f64,
    pub chain_rule_max_abs: f64,
    /// Largest LSE window, for comparison.
    pub lse_window: Option<usize>,
    pub lse_frobenius_rel: Option<f64>,
    /// Chain-rule over LSE `frobenius_rel`.
    pub ratio_to_lse: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub window: usize,
    pub spikes: usize,
    pub num_factors: usize,
    pub residue_spikes: usize,
    pub ks_distance: f64,
    pub residue_ks_distance: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TwinSummary {
    pub buses: usize,
    pub state_dim: usize,
    pub samples: usize,
    pub corruption: Option<String>,
    pub converged_iterations: Option<usize>,
    pub windows: Vec<WindowSummary>,
    pub mlp: Option<MlpSummary>,
    pub spectrum: Option<SpectrumSummary>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    writer: ArtifactWriter,
    completed: Vec<&'static str>,
    case_sha256: Option<String>,
    summary: TwinSummary,
}

/// Runs the pipeline into `out_dir` and writes `manifest.json` there, also
/// when a stage fails; the failure is then returned as
/// [`CliError::Stage`].
pub fn run_twin(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    let mut run = Run {
        cfg,
        writer: ArtifactWriter::create(out_dir)?,
        completed: Vec::new(),
        case_sha256: None,
        summary: TwinSummary::default(),
    };
    let result = run.stages();
    let manifest = run.manifest(result.as_ref().err());
    let path = out_dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    result.map(|()| manifest)
}

impl Run<'_> {
    fn stage<R>(
        &mut self,
        name: &'static str,
        f: impl FnOnce(&mut Self) -> Result<R, CliError>,
    ) -> Result<R, CliError> {
        let out = f(self).map_err(|e| CliError::Stage {
            stage: name,
            source: Box::new(e),
        })?;
        self.completed.push(name);
        Ok(out)
    }

    fn rule(&self) -> OutlierRule {
        OutlierRule {
            threshold: self.cfg.estimation.outlier_threshold,
        }
    }

    fn stages(&mut self) -> Result<(), CliError> {
        let (truth, description) = self.stage("load", Self::load)?;
        self.stage("solve", |run| {
            let sol = solve_powerflow(&truth, &PowerFlowOptions::default())?;
            run.summary.converged_iterations = Some(sol.iterations);
            run.writer.write("solution.json", sol.to_json() + "\n")
        })?;
        let series = self.stage("simulate", |run| run.simulate(&truth))?;
        let bench = self.stage("benchmark", |run| {
            let bench = benchmark_jacobian_with(&description, &series, false)?;
            let header = series.index_map.state_labels();
            run.writer
                .write("jacobian_mean.csv", matrix_to_csv(&header, &bench.j_mean))?;
            run.writer
                .write("jacobian_std.csv", matrix_to_csv(&header, &bench.j_std))?;
            Ok(bench)
        })?;
        if self.cfg.estimation.windows.is_empty() && !self.cfg.mlp.enabled {
            return self.write_summary();
        }
        let reports = if self.cfg.estimation.windows.is_empty() {
            Vec::new()
        } else {
            self.stage("estimate", |run| run.estimate(&series, &bench))?
        };
        if self.cfg.mlp.enabled {
            self.stage("mlp", |run| run.mlp(&series, &bench, &reports))?;
        }
        if let Some((w, report)) = reports.iter().max_by_key(|(w, _)| *w) {
            self.stage("analytics", |run| run.analytics(*w, report))?;
        }
        self.write_summary()
    }

    fn load(&mut self) -> Result<(Network<f64>, Network<f64>), CliError> {
        self.cfg.validate()?;
        let path = self.cfg.resolved_case_path();
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        self.case_sha256 = Some(sha256_hex(text.as_bytes()));
        let truth = parse_case::<f64>(&text).map_err(|e| CliError::parse(&path, e))?;
        let description = match &self.cfg.corruption {
            Some(edit) => {
                let d = truth.apply_branch_edit(edit)?;
                self.writer.write("description.case", d.to_case_string())?;
                self.summary.corruption = Some(edit.to_string());
                d
            }
            None => truth.clone(),
        };
        self.summary.buses = truth.len();
        Ok((truth, description))
    }

    fn simulate(&mut self, truth: &Network<f64>) -> Result<TelemetrySeries<f64>, CliError> {
        let fc = &self.cfg.fluctuation;
        let series = simulate_series(truth, fc)?;
        let (states, injections) = series_to_csv(&series);
        self.writer.write("telemetry_states.csv", states)?;
        self.writer.write("telemetry_injections.csv", injections)?;
        let z = standardize(&series.y, fc.artificial_noise_sigma, fc.seed)?;
        self.writer.write(
            "telemetry_injections_standardized.csv",
            matrix_to_csv(&series.index_map.injection_labels(), &z.transpose()),
        )?;
        self.summary.state_dim = series.dim();
        self.summary.samples = series.len();
        Ok(series)
    }

    fn estimate(
        &mut self,
        series: &TelemetrySeries<f64>,
        bench: &JacobianBenchmark<f64>,
    ) -> Result<Vec<(usize, BiasReport<f64>)>, CliError> {
        let mut reports = Vec::new();
        for &w in &self.cfg.estimation.windows {
            let est = lse_jacobian(&form_deltas(series, 0, w)?)?;
            let report = bias_report(&est, bench, &self.rule())?;
            self.writer
                .write(&format!("lse_w{w}_bias.csv"), report.to_csv())?;
            self.writer.write(
                &format!("lse_w{w}_summary.json"),
                report.summary_json() + "\n",
            )?;
            if self.cfg.emit_heatmaps {
                self.writer
                    .write(&format!("lse_w{w}_bias.pgm"), report.heatmap_pgm())?;
            }
            self.summary.windows.push(WindowSummary {
                window: w,
                frobenius_rel: report.frobenius_rel,
                max_abs: report.max_abs,
                outliers: report.outliers.len(),
                top_outlier: report.outliers.first().map(|o| o.label.clone()),
            });
            reports.push((w, report));
        }
        self.writer
            .write_json("windows.json", &self.summary.windows)?;
        Ok(reports)
    }

    fn mlp(
        &mut self,
        series: &TelemetrySeries<f64>,
        bench: &JacobianBenchmark<f64>,
        reports: &[(usize, BiasReport<f64>)],
    ) -> Result<(), CliError> {
        let mc = &self.cfg.mlp;
        let out = train(series, &mc.train, &mc.layer_sizes)?;
        self.writer
            .write("mlp_model.json", out.model.to_json() + "\n")?;
        let mut loss = String::from("epoch,loss\n");
        for (k, l) in out.loss_history.iter().enumerate() {
            loss.push_str(&format!("{},{l}\n", k + 1));
        }
        self.writer.write("mlp_loss.csv", loss)?;

        let (start, end) = mc.train.test_range;
        let pred = out
            .model
            .predict_batch(&series.x.columns(start, end - start).into_owned())?;
        let labels = series.index_map.injection_labels();
        self.writer.write(
            "mlp_test_predictions.csv",
            matrix_to_csv(&labels, &pred.transpose()),
        )?;
        let mut errors = Vec::with_capacity(labels.len());
        for (r, label) in labels.iter().enumerate() {
            let p: Vec<f64> = pred.row(r).iter().copied().collect();
            let t: Vec<f64> = series
                .y
                .row(r)
                .columns(start, end - start)
                .iter()
                .copied()
                .collect();
            errors.push(TraceError {
                label: label.clone(),
                relative_rmse: relative_rmse(&p, &t)?,
            });
        }

        let (t0, t1) = mc.train.train_range;
        let x_mean = series.x.columns(t0, t1 - t0).column_mean();
        let chain = out
            .model
            .chain_rule_jacobian(x_mean.as_slice(), &series.index_map)?;
        let report = bias_report(&chain, bench, &self.rule())?;
        self.writer
            .write("mlp_chain_rule_bias.csv", report.to_csv())?;
        if self.cfg.emit_heatmaps {
            self.writer
                .write("mlp_chain_rule_bias.pgm", report.heatmap_pgm())?;
        }
        let lse = reports.iter().max_by_key(|(w, _)| *w);
        let summary = MlpSummary {
            final_loss: out.loss_history.last().copied(),
            test_relative_rmse: errors,
            chain_rule_frobenius_rel: report.frobenius_rel,
            chain_rule_max_abs: report.max_abs,
            lse_window: lse.map(|(w, _)| *w),
            lse_frobenius_rel: lse.map(|(_, r)| r.frobenius_rel),
            ratio_to_lse: lse.map(|(_, r)| report.frobenius_rel / r.frobenius_rel),
        };
        self.writer.write_json("mlp_summary.json", &summary)?;
        self.summary.mlp = Some(summary);
        Ok(())
    }

    fn analytics(&mut self, window: usize, report: &BiasReport<f64>) -> Result<(), CliError> {
        let spectrum: BiasSpectrum =
            bias_spectrum(&report.bias, self.cfg.analytics.num_factors.fixed())?;
        let bins = self.cfg.analytics.histogram_bins;
        self.writer.write_json("spectrum.json", &spectrum)?;
        self.writer
            .write("spectrum_histogram.csv", spectrum.bias.histogram_csv(bins))?;
        self.writer.write(
            "residue_histogram.csv",
            spectrum.residue.histogram_csv(bins),
        )?;
        self.summary.spectrum = Some(SpectrumSummary {
            window,
            spikes: spectrum.bias.spikes.len(),
            num_factors: spectrum.num_factors,
            residue_spikes: spectrum.residue.spikes.len(),
            ks_distance: spectrum.bias.ks_distance,
            residue_ks_distance: spectrum.residue.ks_distance,
        });
        Ok(())
    }

    fn write_summary(&mut self) -> Result<(), CliError> {
        let summary = std::mem::take(&mut self.summary);
        self.writer.write_json("summary.json", &summary)?;
        self.summary = summary;
        Ok(())
    }

    fn manifest(&self, error: Option<&CliError>) -> Manifest {
        let mut config = serde_json::to_value(self.cfg).expect("config serializes");
        if let Some(obj) = config.as_object_mut() {
            obj.remove("output_dir");
        }
        let failure = error.map(|e| match e {
            CliError::Stage { stage, source } => Failure {
                stage,
                error: source.to_string(),
            },
            other => Failure {
                stage: "setup",
                error: other.to_string(),
            },
        });
        Manifest {
            status: if failure.is_some() {
                "failed"
            } else {
                "complete"
            },
            stages_completed: self.completed.clone(),
            failure,
            seeds: Seeds {
                fluctuation: self.cfg.fluctuation.seed,
                artificial_noise: self.cfg.fluctuation.seed,
                mlp: self.cfg.mlp.enabled.then_some(self.cfg.mlp.train.seed),
            },
            case_sha256: self.case_sha256.clone(),
            config,
            artifacts: self.writer.artifacts(),
        }
    }
}
