//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration error.
//! Every JSON document and CSV row carries `schema_version`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::accel_sim::{build_mapping, peak_gops, simulate, ArchConfig, Workload};
use crate::config::{load_cost_config, load_sim_config};
use crate::cost_model::{area_report, computations_per_read, energy_report, scale_baseline, CostConfig};
use crate::dnn_eval::{self, Arith, Dataset, TinyModel};
use crate::error::{Error, Result};
use crate::fp_mul::{decode, fp_mul, mantissa_error_table, FpClass, FpFormat, Sampling, BFLOAT16, FLOAT32};
use crate::oracle::{exhaustive_suite, EXHAUSTIVE_LIMIT};
use crate::pp_core::{approx_mul, decode_lines, exact_mul, LineSet, MulConfig, Variant};
use crate::sram_layout::{pack_bank, BankGeometry, BankSize};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "ormul", version, about = "Approximate in-SRAM multiplier simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Key-value configuration file (architecture and workload).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format; `text` is only available for `mul`.
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Fla,
    Pc2,
    Pc3,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Fla => Variant::Fla,
            VariantArg::Pc2 => Variant::Pc2,
            VariantArg::Pc3 => Variant::Pc3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantSel {
    Fla,
    Pc2,
    Pc3,
    All,
}

impl VariantSel {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantSel::Fla => vec![Variant::Fla],
            VariantSel::Pc2 => vec![Variant::Pc2],
            VariantSel::Pc3 => vec![Variant::Pc3],
            VariantSel::All => Variant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Truncation {
    Full,
    Truncated,
    Both,
}

impl Truncation {
    fn flags(self) -> Vec<bool> {
        match self {
            Truncation::Full => vec![false],
            Truncation::Truncated => vec![true],
            Truncation::Both => vec![false, true],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Datatype {
    Bfloat16,
    Float32,
}

impl Datatype {
    fn format(self) -> FpFormat {
        match self {
            Datatype::Bfloat16 => BFLOAT16,
            Datatype::Float32 => FLOAT32,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Multiply two operands and show the raised lines.
    Mul(MulArgs),
    /// Relative-error statistics of the significand multiplier.
    Stats(StatsArgs),
    /// Kernel packing of one SRAM bank.
    Layout(LayoutArgs),
    /// Cycle simulation of the workload in --config.
    Simulate,
    /// Energy and area breakdown of the workload in --config.
    Cost(CostArgs),
    /// Accuracy of a small CNN under each multiplier.
    Eval(EvalArgs),
    /// Exhaustive comparison against the reference multiplier.
    Verify,
}

#[derive(Args, Debug)]
struct MulArgs {
    /// Multiplicand: 0b/0x/0o/decimal integer, or a real number with --datatype.
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    /// Multiplier, same syntax as --a.
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    #[arg(long, value_enum, default_value = "fla")]
    variant: VariantArg,
    /// Operand width in bits (integer operands only).
    #[arg(long)]
    width: Option<u32>,
    /// Operands carry a leading 1 at bit width-1.
    #[arg(long)]
    fp: bool,
    #[arg(long)]
    truncate: bool,
    /// Treat operands as floating-point numbers in this format.
    #[arg(long, value_enum, conflicts_with_all = ["width", "fp"])]
    datatype: Option<Datatype>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, value_enum, default_value = "bfloat16")]
    datatype: Datatype,
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantSel,
    #[arg(long, value_enum, default_value = "both")]
    truncation: Truncation,
    /// Sweep every significand pair instead of sampling.
    #[arg(long)]
    exhaustive: bool,
    /// Sampled pairs when not exhaustive.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
}

#[derive(Args, Debug)]
struct LayoutArgs {
    /// Bank capacity, e.g. 8kB or 512kB (ignored with --config).
    #[arg(long)]
    bank: Option<BankSize>,
    #[arg(long, value_enum, default_value = "pc3")]
    variant: VariantArg,
    #[arg(long)]
    truncate: bool,
    #[arg(long, value_enum, default_value = "bfloat16")]
    datatype: Datatype,
}

#[derive(Args, Debug)]
struct CostArgs {
    /// Cost file; the built-in illustrative values are used when absent.
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Known energy of the wide reference multiplier (enables baseline scaling).
    #[arg(long, requires_all = ["e_sim16", "e_sim32", "t"])]
    e32: Option<f64>,
    #[arg(long, requires = "e32")]
    e_sim16: Option<f64>,
    #[arg(long, requires = "e32")]
    e_sim32: Option<f64>,
    /// Scaling factor applied to the ratio.
    #[arg(long, requires = "e32")]
    t: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model file; a seeded CNN is generated when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset file; seeded synthetic inputs are generated when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic samples.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, value_enum, default_value = "bfloat16")]
    datatype: Datatype,
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantSel,
    #[arg(long, value_enum, default_value = "both")]
    truncation: Truncation,
    /// Also write the model used to this path.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Also write the dataset used to this path.
    #[arg(long)]
    save_dataset: Option<PathBuf>,
}

/// Runs the CLI against the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the CLI with explicit output streams and returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(&cli) {
        Ok(output) => {
            let written = match &cli.common.out {
                Some(path) => std::fs::write(path, output.text.as_bytes()).map_err(Error::from),
                None => out.write_all(output.text.as_bytes()).map_err(Error::from),
            };
            if let Err(e) = written {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USAGE;
            }
            if let Some(msg) = output.failure {
                let _ = writeln!(err, "verification failed: {msg}");
                return EXIT_VERIFY_FAILED;
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

struct Output {
    text: String,
    failure: Option<String>,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, failure: None }
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

/// Tidy long-format CSV writer.
struct LongCsv {
    w: csv::Writer<Vec<u8>>,
}

impl LongCsv {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut cols = vec!["schema_version"];
        cols.extend_from_slice(header);
        w.write_record(&cols).expect("in-memory write");
        LongCsv { w }
    }

    fn row(&mut self, fields: &[String]) {
        let mut rec = vec![SCHEMA_VERSION.to_string()];
        rec.extend_from_slice(fields);
        self.w.write_record(&rec).expect("in-memory write");
    }

    fn finish(self) -> String {
        let bytes = self.w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("csv is utf-8")
    }
}

fn format_or(common: &Common, default: OutFormat) -> Result<OutFormat> {
    let f = common.format.unwrap_or(default);
    if f == OutFormat::Text && default != OutFormat::Text {
        return Err(Error::Config("text output is only available for `mul`".into()));
    }
    Ok(f)
}

fn require_config(common: &Common, cmd: &str) -> Result<PathBuf> {
    common
        .config
        .clone()
        .ok_or_else(|| Error::Config(format!("`{cmd}` needs --config <file>")))
}

fn dispatch(cli: &Cli) -> Result<Output> {
    let c = &cli.common;
    match &cli.command {
        Command::Mul(a) => cmd_mul(c, a),
        Command::Stats(a) => cmd_stats(c, a),
        Command::Layout(a) => cmd_layout(c, a),
        Command::Simulate => cmd_simulate(c),
        Command::Cost(a) => cmd_cost(c, a),
        Command::Eval(a) => cmd_eval(c, a),
        Command::Verify => cmd_verify(c),
    }
}

fn parse_int(s: &str) -> Result<u64> {
    let t = s.trim().replace('_', "");
    let (digits, radix) = if let Some(r) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        (r, 2)
    } else if let Some(r) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        (r, 16)
    } else if let Some(r) = t.strip_prefix("0o").or_else(|| t.strip_prefix("0O")) {
        (r, 8)
    } else {
        (t.as_str(), 10)
    };
    u64::from_str_radix(digits, radix).map_err(|e| Error::Config(format!("invalid operand `{s}`: {e}")))
}

fn parse_real(s: &str) -> Result<f32> {
    s.trim()
        .parse::<f32>()
        .map_err(|e| Error::Config(format!("invalid operand `{s}`: {e}")))
}

#[derive(Serialize)]
struct MulReport {
    schema_version: u32,
    config: String,
    datatype: Option<&'static str>,
    a: String,
    b: String,
    approx: String,
    approx_bits: String,
    exact: String,
    exact_bits: String,
    abs_error: f64,
    rel_error: f64,
    lines: Vec<String>,
    dropped_bits: Vec<u32>,
}

fn line_labels(ls: &LineSet, cfg: &MulConfig) -> Vec<String> {
    ls.lines.iter().map(|l| l.label(cfg)).collect()
}

fn rel(abs: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        0.0
    } else {
        abs / exact.abs()
    }
}

fn cmd_mul(c: &Common, a: &MulArgs) -> Result<Output> {
    let variant: Variant = a.variant.into();
    let report = match a.datatype {
        None => {
            let width = a
                .width
                .ok_or_else(|| Error::Config("integer operands need --width (or use --datatype)".into()))?;
            let cfg = MulConfig::new(variant, width, a.fp, a.truncate)?;
            let (x, y) = (parse_int(&a.a)?, parse_int(&a.b)?);
            let approx = approx_mul(x, y, &cfg)?;
            let exact = exact_mul(x, y);
            let lines = decode_lines(y, &cfg)?;
            let abs = exact.abs_diff(approx) as f64;
            MulReport {
                schema_version: SCHEMA_VERSION,
                config: cfg.to_string(),
                datatype: None,
                a: x.to_string(),
                b: y.to_string(),
                approx: approx.to_string(),
                approx_bits: format!("{approx:#b}"),
                exact: exact.to_string(),
                exact_bits: format!("{exact:#b}"),
                abs_error: abs,
                rel_error: rel(abs, exact as f64),
                lines: line_labels(&lines, &cfg),
                dropped_bits: lines.dropped_bits,
            }
        }
        Some(dt) => {
            let fmt = dt.format();
            let cfg = MulConfig::new(variant, fmt.significand_bits(), true, a.truncate)?;
            let (x, y) = (fmt.from_f32(parse_real(&a.a)?), fmt.from_f32(parse_real(&a.b)?));
            let approx = fp_mul(x, y, &fmt, &cfg)?;
            let exact = fmt.to_f64(x) * fmt.to_f64(y);
            let got = fmt.to_f64(approx);
            let yv = decode(y, &fmt);
            let xv = decode(x, &fmt);
            let (lines, dropped) = if yv.class == FpClass::Normal && xv.class == FpClass::Normal {
                let ls = decode_lines(yv.significand, &cfg)?;
                (line_labels(&ls, &cfg), ls.dropped_bits)
            } else {
                (Vec::new(), Vec::new())
            };
            let abs = (exact - got).abs();
            let hex = fmt.word_bits().div_ceil(4) as usize;
            MulReport {
                schema_version: SCHEMA_VERSION,
                config: cfg.to_string(),
                datatype: Some(fmt.name),
                a: fmt.to_f64(x).to_string(),
                b: fmt.to_f64(y).to_string(),
                approx: got.to_string(),
                approx_bits: format!("{approx:#0w$x}", w = hex + 2),
                exact: exact.to_string(),
                exact_bits: format!("{:#x}", exact.to_bits()),
                abs_error: abs,
                rel_error: if abs.is_nan() { f64::NAN } else { rel(abs, exact) },
                lines,
                dropped_bits: dropped,
            }
        }
    };
    Ok(Output::ok(match format_or(c, OutFormat::Text)? {
        OutFormat::Json => pretty(&report),
        OutFormat::Csv => {
            let mut w = LongCsv::new(&["metric", "value"]);
            let fields = [
                ("config", report.config.clone()),
                ("a", report.a.clone()),
                ("b", report.b.clone()),
                ("approx", report.approx.clone()),
                ("approx_bits", report.approx_bits.clone()),
                ("exact", report.exact.clone()),
                ("exact_bits", report.exact_bits.clone()),
                ("abs_error", report.abs_error.to_string()),
                ("rel_error", report.rel_error.to_string()),
                ("lines", report.lines.join(" ")),
            ];
            for (k, v) in fields {
                w.row(&[k.to_string(), v]);
            }
            w.finish()
        }
        OutFormat::Text => {
            let mut s = String::new();
            s += &format!("config     {}\n", report.config);
            s += &format!("approx     {} ({})\n", report.approx_bits, report.approx);
            s += &format!("exact      {} ({})\n", report.exact_bits, report.exact);
            s += &format!("abs_error  {}\n", report.abs_error);
            s += &format!("rel_error  {}\n", report.rel_error);
            s += &format!("lines      {}\n", report.lines.join(" "));
            if !report.dropped_bits.is_empty() {
                s += &format!("dropped    {:?}\n", report.dropped_bits);
            }
            s
        }
    }))
}

fn cmd_stats(c: &Common, a: &StatsArgs) -> Result<Output> {
    let fmt = a.datatype.format();
    let sampling = if a.exhaustive {
        Sampling::Exhaustive
    } else {
        Sampling::Random {
            count: a.samples,
            seed: c.seed,
        }
    };
    let mut rows = Vec::new();
    for v in a.variant.variants() {
        for tr in a.truncation.flags() {
            let cfg = MulConfig::new(v, fmt.significand_bits(), true, tr)?;
            rows.push((cfg, mantissa_error_table(&fmt, &cfg, sampling)?));
        }
    }
    Ok(Output::ok(match format_or(c, OutFormat::Json)? {
        OutFormat::Csv => {
            let mut w = LongCsv::new(&["datatype", "config", "metric", "value"]);
            for (cfg, s) in &rows {
                for (k, v) in [
                    ("pairs", s.pairs.to_string()),
                    ("mean_relative_error", s.mean_relative_error.to_string()),
                    ("max_relative_error", s.max_relative_error.to_string()),
                    ("exact_fraction", s.exact_fraction.to_string()),
                ] {
                    w.row(&[fmt.name.into(), cfg.label(), k.into(), v]);
                }
            }
            w.finish()
        }
        _ => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "datatype": fmt.name,
            "sampling": sampling,
            "results": rows.iter().map(|(cfg, s)| json!({
                "config": cfg.label(),
                "variant": cfg.variant(),
                "truncate": cfg.truncate(),
                "stats": s,
            })).collect::<Vec<_>>(),
        })),
    }))
}

fn cmd_layout(c: &Common, a: &LayoutArgs) -> Result<Output> {
    let (bank, cfg, fmt) = match &c.config {
        Some(path) => {
            let (arch, _) = load_sim_config(path)?;
            (arch.bank, arch.mul, arch.fmt)
        }
        None => {
            let size = a
                .bank
                .ok_or_else(|| Error::Config("`layout` needs --bank <size> or --config <file>".into()))?;
            let fmt = a.datatype.format();
            let cfg = MulConfig::new(a.variant.into(), fmt.significand_bits(), true, a.truncate)?;
            (BankGeometry::square(size.0)?, cfg, fmt)
        }
    };
    let layout = pack_bank(&bank, &cfg, &fmt)?;
    let per_read = computations_per_read(&layout);
    Ok(Output::ok(match format_or(c, OutFormat::Json)? {
        OutFormat::Csv => {
            let mut w = LongCsv::new(&["metric", "value"]);
            for (k, v) in [
                ("bank_bytes", bank.size_bytes.to_string()),
                ("bank_rows", bank.rows.to_string()),
                ("bank_cols", bank.cols.to_string()),
                ("config", cfg.label()),
                ("datatype", fmt.name.to_string()),
                ("product_width_bits", layout.product_width_bits.to_string()),
                ("lines_per_element", layout.lines_per_element.to_string()),
                ("rows_per_group", layout.rows_per_group.to_string()),
                ("elements_per_row_group", layout.elements_per_row_group.to_string()),
                ("row_groups", layout.row_groups.to_string()),
                ("capacity_elements", layout.capacity_elements.to_string()),
                ("unused_bits", layout.unused_bits.to_string()),
                ("computations_per_read", per_read.to_string()),
            ] {
                w.row(&[k.into(), v]);
            }
            w.finish()
        }
        _ => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "bank": bank,
            "config": cfg.label(),
            "datatype": fmt.name,
            "layout": layout,
            "computations_per_read": per_read,
        })),
    }))
}

fn sim_json(arch: &ArchConfig, w: &Workload) -> Result<(serde_json::Value, crate::accel_sim::SimReport)> {
    let mapping = build_mapping(arch, w)?;
    let report = simulate(arch, w, &mapping)?;
    let v = json!({
        "arch": {
            "banks": arch.banks,
            "bank": arch.bank,
            "config": arch.mul.label(),
            "datatype": arch.fmt.name,
            "clock_hz": arch.clock_hz,
            "regfile_entries_per_bank": arch.regfile_entries_per_bank,
            "scratchpad_inputs_per_cycle": arch.scratchpad_inputs_per_cycle,
        },
        "workload": w,
        "gemm": mapping.shape,
        "layout": mapping.layout,
        "row_groups_used": mapping.row_group_count(),
        "max_row_groups_per_bank": mapping.max_groups_per_bank(),
        "peak_gops": peak_gops(arch)?,
        "report": report,
    });
    Ok((v, report))
}

fn cmd_simulate(c: &Common) -> Result<Output> {
    let (arch, w) = load_sim_config(&require_config(c, "simulate")?)?;
    let (mut doc, r) = sim_json(&arch, &w)?;
    Ok(Output::ok(match format_or(c, OutFormat::Json)? {
        OutFormat::Csv => {
            let a = &r.access_counts;
            let mut csv = LongCsv::new(&["metric", "value"]);
            for (k, v) in [
                ("cycles", r.cycles.to_string()),
                ("useful_macs", r.useful_macs.to_string()),
                ("pe_count", r.pe_count.to_string()),
                ("utilization", r.utilization.to_string()),
                ("sustained_gops", r.sustained_gops.to_string()),
                ("peak_gops", peak_gops(&arch)?.to_string()),
                ("sram_compute_read", a.sram_compute_read.to_string()),
                ("regfile_read", a.regfile_read.to_string()),
                ("scratchpad_read", a.scratchpad_read.to_string()),
                ("scratchpad_write", a.scratchpad_write.to_string()),
                ("decoder_op", a.decoder_op.to_string()),
                ("accumulator_add", a.accumulator_add.to_string()),
            ] {
                csv.row(&[k.into(), v]);
            }
            csv.finish()
        }
        _ => {
            doc["schema_version"] = json!(SCHEMA_VERSION);
            pretty(&doc)
        }
    }))
}

fn cmd_cost(c: &Common, a: &CostArgs) -> Result<Output> {
    let (arch, w) = load_sim_config(&require_config(c, "cost")?)?;
    let cc = match &a.cost {
        Some(p) => load_cost_config(p)?,
        None => CostConfig::illustrative(),
    };
    let mapping = build_mapping(&arch, &w)?;
    let sim = simulate(&arch, &w, &mapping)?;
    let area = area_report(&arch, &cc)?;
    let report = energy_report(&sim, &cc).with_area(area);
    let baseline = match (a.e32, a.e_sim16, a.e_sim32, a.t) {
        (Some(e32), Some(e16), Some(es32), Some(t)) => Some(scale_baseline(e32, e16, es32, t)?),
        _ => None,
    };
    Ok(Output::ok(match format_or(c, OutFormat::Json)? {
        OutFormat::Csv => {
            let mut csv = LongCsv::new(&["quantity", "component", "value"]);
            for (k, v) in report.energy.components() {
                csv.row(&["energy_j".into(), k.into(), v.to_string()]);
            }
            csv.row(&["energy_j".into(), "total".into(), report.total_energy.to_string()]);
            csv.row(&["energy_per_mac_j".into(), "total".into(), report.energy_per_mac.to_string()]);
            csv.row(&["decoder_share".into(), "decoder".into(), report.decoder_share.to_string()]);
            for (k, v) in area.components() {
                csv.row(&["area_mm2".into(), k.into(), v.to_string()]);
            }
            csv.row(&["area_mm2".into(), "total".into(), area.total().to_string()]);
            if let Some(b) = baseline {
                csv.row(&["baseline_energy_j".into(), "scaled".into(), b.to_string()]);
            }
            csv.finish()
        }
        _ => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "provenance": cc.provenance,
            "config": arch.mul.label(),
            "workload": w,
            "useful_macs": sim.useful_macs,
            "cost": report,
            "baseline_energy": baseline,
        })),
    }))
}

fn cmd_eval(c: &Common, a: &EvalArgs) -> Result<Output> {
    let model = match &a.model {
        Some(p) => dnn_eval::load_model(p)?,
        None => TinyModel::seeded_cnn(c.seed),
    };
    let data = match &a.dataset {
        Some(p) => dnn_eval::load_dataset(p)?,
        None => Dataset::synthetic(&model.input_shape, a.samples, c.seed.wrapping_add(1)),
    };
    if let Some(p) = &a.save_model {
        dnn_eval::save_model(&model, p)?;
    }
    if let Some(p) = &a.save_dataset {
        dnn_eval::save_dataset(&data, p)?;
    }
    let fmt = a.datatype.format();
    let mut ariths = Vec::new();
    for v in a.variant.variants() {
        for tr in a.truncation.flags() {
            ariths.push(Arith::Approx {
                config: MulConfig::new(v, fmt.significand_bits(), true, tr)?,
                fmt,
            });
        }
    }
    let results = dnn_eval::evaluate(&model, &data, &ariths)?;
    Ok(Output::ok(match format_or(c, OutFormat::Json)? {
        OutFormat::Csv => {
            let mut csv = LongCsv::new(&["config", "scope", "metric", "value"]);
            for r in &results {
                for l in &r.per_layer {
                    csv.row(&[
                        r.config.clone(),
                        format!("layer{}:{}", l.index, l.layer),
                        "mean_relative_error".into(),
                        l.mean_relative_error.to_string(),
                    ]);
                }
                csv.row(&[
                    r.config.clone(),
                    "model".into(),
                    "logit_max_abs_error".into(),
                    r.logit_max_abs_error.to_string(),
                ]);
                csv.row(&[
                    r.config.clone(),
                    "model".into(),
                    "top1_agreement".into(),
                    r.top1_agreement.to_string(),
                ]);
            }
            csv.finish()
        }
        _ => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "model_seed": model.seed,
            "samples": data.samples.len(),
            "datatype": fmt.name,
            "results": results,
        })),
    }))
}

fn cmd_verify(c: &Common) -> Result<Output> {
    let reports = exhaustive_suite(EXHAUSTIVE_LIMIT)?;
    let pairs: u64 = reports.iter().map(|r| r.pairs_checked).sum();
    let mismatches: usize = reports.iter().map(|r| r.mismatches.len()).sum();
    let text = match format_or(c, OutFormat::Json)? {
        OutFormat::Csv => {
            let mut csv = LongCsv::new(&["config", "metric", "value"]);
            for r in &reports {
                let name = r.config.to_string();
                csv.row(&[name.clone(), "pairs_checked".into(), r.pairs_checked.to_string()]);
                csv.row(&[name, "mismatches".into(), r.mismatches.len().to_string()]);
            }
            csv.finish()
        }
        _ => pretty(&json!({
            "schema_version": SCHEMA_VERSION,
            "max_width": EXHAUSTIVE_LIMIT,
            "configs_checked": reports.len(),
            "pairs_checked": pairs,
            "mismatches": mismatches,
            "reports": reports.iter().map(|r| json!({
                "config": r.config.to_string(),
                "pairs_checked": r.pairs_checked,
                "mismatches": r.mismatches.len(),
                "first_mismatches": &r.mismatches[..r.mismatches.len().min(8)],
            })).collect::<Vec<_>>(),
        })),
    };
    Ok(Output {
        text,
        failure: (mismatches > 0).then(|| format!("{mismatches} mismatches over {pairs} pairs")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["ormul"];
        full.extend_from_slice(args);
        let code = run_with(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn literals() {
        assert_eq!(parse_int("0b1011").unwrap(), 11);
        assert_eq!(parse_int("0x1F").unwrap(), 31);
        assert_eq!(parse_int("0o17").unwrap(), 15);
        assert_eq!(parse_int("1_000").unwrap(), 1000);
        assert!(parse_int("0b102").is_err());
    }

    #[test]
    fn mul_example() {
        let (code, out, _) = call(&["mul", "--a", "0b1011", "--b", "0b0101", "--variant", "fla", "--width", "4"]);
        assert_eq!(code, 0);
        assert!(out.contains("0b101111 (47)"), "{out}");
        assert!(out.contains("(55)"), "{out}");
    }

    #[test]
    fn mul_zero_operand() {
        let (code, out, _) = call(&[
            "mul", "--a", "1", "--b", "0", "--width", "4", "--format", "json",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["approx"], "0");
        assert_eq!(v["abs_error"], 0.0);
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
    }

    #[test]
    fn mul_bfloat16() {
        let (code, out, _) = call(&[
            "mul", "--datatype", "bfloat16", "--a", "1.5", "--b", "1.5", "--variant", "pc2", "--format", "json",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["approx"], "2.25");
    }

    #[test]
    fn mul_missing_hidden_bit_is_explained() {
        let (code, _, err) = call(&["mul", "--a", "0b0101", "--b", "0b1000", "--width", "4", "--fp"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("leading 1"), "{err}");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["mul", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["simulate"]).0, EXIT_USAGE);
        assert_eq!(call(&["stats", "--format", "text"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn layout_512k() {
        let (code, out, _) = call(&[
            "layout", "--bank", "512kB", "--variant", "pc3", "--truncate", "--datatype", "bfloat16",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["layout"]["row_groups"], 128);
        assert_eq!(v["layout"]["elements_per_row_group"], 256);
    }
}
