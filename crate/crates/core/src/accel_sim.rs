//! Cycle-approximate model of the banked in-SRAM multiply datapath.
//!
//! Kernels are weight-stationary: every row-group binds one reduction index
//! `k` to a contiguous run of output channels. Each cycle a bank raises the
//! wordlines of one row-group using one input value from its register file,
//! and every occupied column feeds its product to that column's accumulator.
//! Inputs arrive from a shared scratchpad with a bounded fetch bandwidth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fp_mul::{fp_mul, ExactSum, FpFormat};
use crate::pp_core::MulConfig;
use crate::sram_layout::{pack_bank, BankGeometry, KernelLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArchConfig {
    pub banks: u32,
    pub bank: BankGeometry,
    pub mul: MulConfig,
    pub fmt: FpFormat,
    pub clock_hz: f64,
    pub regfile_entries_per_bank: u32,
    /// Inputs the scratchpad can deliver to register files per cycle, across all banks.
    pub scratchpad_inputs_per_cycle: u32,
}

impl ArchConfig {
    pub const DEFAULT_REGFILE_ENTRIES: u32 = 4;

    /// Architecture with default register files and enough fetch bandwidth
    /// that no bank ever starves.
    pub fn new(
        banks: u32,
        bank: BankGeometry,
        mul: MulConfig,
        fmt: FpFormat,
        clock_hz: f64,
    ) -> Result<Self> {
        let arch = ArchConfig {
            banks,
            bank,
            mul,
            fmt,
            clock_hz,
            regfile_entries_per_bank: Self::DEFAULT_REGFILE_ENTRIES,
            scratchpad_inputs_per_cycle: banks,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.banks == 0 {
            return Err(Error::InvalidArch("banks must be at least 1".into()));
        }
        if self.regfile_entries_per_bank == 0 {
            return Err(Error::InvalidArch("regfile_entries_per_bank must be at least 1".into()));
        }
        if self.scratchpad_inputs_per_cycle == 0 {
            return Err(Error::InvalidArch("scratchpad_inputs_per_cycle must be at least 1".into()));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::InvalidArch(format!("clock_hz must be positive, got {}", self.clock_hz)));
        }
        self.layout().map(|_| ())
    }

    pub fn layout(&self) -> Result<KernelLayout> {
        pack_bank(&self.bank, &self.mul, &self.fmt)
    }

    /// One PE per product-width column slice of every bank.
    pub fn pe_count(&self) -> Result<u64> {
        Ok(self.banks as u64 * self.layout()?.elements_per_row_group as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GemmShape {
    /// Output positions (rows of the input matrix).
    pub m: u64,
    /// Reduction length.
    pub k: u64,
    /// Output channels.
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Workload {
    Gemm {
        m: u64,
        k: u64,
        n: u64,
    },
    Conv {
        h: u64,
        w: u64,
        cin: u64,
        cout: u64,
        kh: u64,
        kw: u64,
        stride: u64,
        pad: u64,
    },
}

impl Workload {
    /// First layer of VGG-8 on a 224x224 RGB image.
    pub fn vgg8_layer1() -> Self {
        Workload::Conv {
            h: 224,
            w: 224,
            cin: 3,
            cout: 64,
            kh: 3,
            kw: 3,
            stride: 1,
            pad: 1,
        }
    }

    /// im2col lowering: `K = kh*kw*cin`, `N = cout`, `M` = output positions.
    pub fn lowered(&self) -> Result<GemmShape> {
        let shape = match *self {
            Workload::Gemm { m, k, n } => GemmShape { m, k, n },
            Workload::Conv {
                h,
                w,
                cin,
                cout,
                kh,
                kw,
                stride,
                pad,
            } => {
                if [h, w, cin, cout, kh, kw, stride].contains(&0) {
                    return Err(Error::InvalidWorkload("conv dimensions must be at least 1".into()));
                }
                let (ph, pw) = (h + 2 * pad, w + 2 * pad);
                if kh > ph || kw > pw {
                    return Err(Error::InvalidWorkload(format!(
                        "{kh}x{kw} kernel larger than padded {ph}x{pw} input"
                    )));
                }
                let out_h = (ph - kh) / stride + 1;
                let out_w = (pw - kw) / stride + 1;
                GemmShape {
                    m: out_h * out_w,
                    k: kh * kw * cin,
                    n: cout,
                }
            }
        };
        if shape.m == 0 || shape.k == 0 || shape.n == 0 {
            return Err(Error::InvalidWorkload("all dimensions must be at least 1".into()));
        }
        Ok(shape)
    }

    /// Distinct input values the layer reads.
    pub fn input_elements(&self) -> Result<u64> {
        Ok(match *self {
            Workload::Conv { h, w, cin, .. } => h * w * cin,
            Workload::Gemm { .. } => {
                let s = self.lowered()?;
                s.m * s.k
            }
        })
    }

    pub fn kernel_elements(&self) -> Result<u64> {
        let s = self.lowered()?;
        Ok(s.k * s.n)
    }
}

/// One stored row-group: reduction index `k`, output channels `n_start..n_start+n_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowGroup {
    pub k: u64,
    pub n_start: u64,
    pub n_len: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mapping {
    pub shape: GemmShape,
    pub layout: KernelLayout,
    /// Row-groups resident in each bank, in k-major order.
    pub banks: Vec<Vec<RowGroup>>,
}

impl Mapping {
    pub fn row_group_count(&self) -> usize {
        self.banks.iter().map(Vec::len).sum()
    }

    pub fn max_groups_per_bank(&self) -> usize {
        self.banks.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Greedy k-major mapping: output channels are tiled by the row-group width
/// and `(k, tile)` row-groups are dealt round-robin across banks.
pub fn build_mapping(arch: &ArchConfig, w: &Workload) -> Result<Mapping> {
    arch.validate()?;
    let shape = w.lowered()?;
    let layout = arch.layout()?;
    let per_group = layout.elements_per_row_group as u64;
    let tiles = shape.n.div_ceil(per_group);
    let needed = shape.k * tiles;
    let available = arch.banks as u64 * layout.row_groups as u64;
    if needed > available {
        return Err(Error::CapacityExceeded {
            needed,
            available,
            shortfall: needed - available,
            kernel_elements: shape.k * shape.n,
        });
    }

    let mut banks = vec![Vec::new(); arch.banks as usize];
    let mut next = 0usize;
    for k in 0..shape.k {
        for t in 0..tiles {
            let n_start = t * per_group;
            let n_len = per_group.min(shape.n - n_start) as u32;
            banks[next].push(RowGroup { k, n_start, n_len });
            next = (next + 1) % banks.len();
        }
    }
    Ok(Mapping {
        shape,
        layout,
        banks,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AccessCounts {
    /// Multi-wordline row-group reads (one per bank-cycle of compute).
    pub sram_compute_read: u64,
    pub regfile_read: u64,
    pub scratchpad_read: u64,
    pub scratchpad_write: u64,
    pub decoder_op: u64,
    pub accumulator_add: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimReport {
    pub cycles: u64,
    pub useful_macs: u64,
    pub pe_count: u64,
    pub utilization: f64,
    pub access_counts: AccessCounts,
    pub sustained_gops: f64,
}

impl SimReport {
    pub const CSV_HEADER: &'static str = "schema_version,cycles,useful_macs,pe_count,utilization,sustained_gops,sram_compute_read,regfile_read,scratchpad_read,scratchpad_write,decoder_op,accumulator_add";

    /// One CSV row matching [`SimReport::CSV_HEADER`].
    pub fn csv_row(&self, schema_version: u32) -> String {
        let a = &self.access_counts;
        format!(
            "{schema_version},{},{},{},{},{},{},{},{},{},{},{}",
            self.cycles,
            self.useful_macs,
            self.pe_count,
            self.utilization,
            self.sustained_gops,
            a.sram_compute_read,
            a.regfile_read,
            a.scratchpad_read,
            a.scratchpad_write,
            a.decoder_op,
            a.accumulator_add
        )
    }
}

/// Per-bank schedule state. Inputs are consumed in order `(m, group)`, where a
/// group is the run of row-groups in this bank sharing one `k`.
struct BankState {
    /// Columns of each row-group, grouped by shared `k`.
    groups: Vec<Vec<u32>>,
    m: u64,
    group: usize,
    item: usize,
    fetched: u64,
    consumed: u64,
    total_inputs: u64,
}

impl BankState {
    fn new(row_groups: &[RowGroup], m_total: u64) -> Self {
        let mut groups: Vec<(u64, Vec<u32>)> = Vec::new();
        for rg in row_groups {
            match groups.last_mut() {
                Some((k, cols)) if *k == rg.k => cols.push(rg.n_len),
                _ => groups.push((rg.k, vec![rg.n_len])),
            }
        }
        let total_inputs = m_total * groups.len() as u64;
        BankState {
            groups: groups.into_iter().map(|(_, c)| c).collect(),
            m: 0,
            group: 0,
            item: 0,
            fetched: 0,
            consumed: 0,
            total_inputs,
        }
    }

    fn done(&self) -> bool {
        self.consumed == self.total_inputs
    }
}

pub fn simulate(arch: &ArchConfig, w: &Workload, mapping: &Mapping) -> Result<SimReport> {
    arch.validate()?;
    let shape = w.lowered()?;
    if shape != mapping.shape || mapping.banks.len() != arch.banks as usize {
        return Err(Error::InvalidWorkload(
            "mapping was built for a different workload or architecture".into(),
        ));
    }
    let pe_count = arch.pe_count()?;
    let regfile_cap = arch.regfile_entries_per_bank as u64;
    let mut banks: Vec<BankState> = mapping
        .banks
        .iter()
        .map(|rgs| BankState::new(rgs, shape.m))
        .collect();

    let mut counts = AccessCounts::default();
    let mut macs = 0u64;
    let mut cycles = 0u64;
    let mut rr_start = 0usize;
    let nbanks = banks.len();

    while banks.iter().any(|b| !b.done()) {
        // fetch: round-robin grants of one input per bank per pass
        let mut budget = arch.scratchpad_inputs_per_cycle as u64;
        while budget > 0 {
            let mut granted = false;
            for i in 0..nbanks {
                if budget == 0 {
                    break;
                }
                let b = &mut banks[(rr_start + i) % nbanks];
                if b.fetched < b.total_inputs && b.fetched - b.consumed < regfile_cap {
                    b.fetched += 1;
                    budget -= 1;
                    counts.scratchpad_read += 1;
                    granted = true;
                }
            }
            if !granted {
                break;
            }
        }
        rr_start = (rr_start + 1) % nbanks;

        // compute: one row-group read per bank with an input ready
        for b in banks.iter_mut() {
            if b.done() || b.fetched == b.consumed {
                continue;
            }
            let cols = b.groups[b.group][b.item] as u64;
            counts.sram_compute_read += 1;
            counts.decoder_op += 1;
            counts.regfile_read += 1;
            counts.accumulator_add += cols;
            macs += cols;
            b.item += 1;
            if b.item == b.groups[b.group].len() {
                b.item = 0;
                b.consumed += 1;
                b.group += 1;
                if b.group == b.groups.len() {
                    b.group = 0;
                    b.m += 1;
                }
            }
        }
        cycles += 1;
    }
    counts.scratchpad_write = shape.m * shape.n;

    let utilization = if cycles == 0 {
        0.0
    } else {
        macs as f64 / (pe_count as f64 * cycles as f64)
    };
    let sustained_gops = if cycles == 0 {
        0.0
    } else {
        2.0 * macs as f64 / (cycles as f64 / arch.clock_hz) / 1e9
    };
    Ok(SimReport {
        cycles,
        useful_macs: macs,
        pe_count,
        utilization,
        access_counts: counts,
        sustained_gops,
    })
}

/// Peak throughput with every PE busy every cycle.
pub fn peak_gops(arch: &ArchConfig) -> Result<f64> {
    let layout = arch.layout()?;
    Ok(2.0 * arch.banks as f64 * layout.elements_per_row_group as f64 * arch.clock_hz / 1e9)
}

/// Computes GEMM outputs by walking the mapping in schedule order.
///
/// `inputs` is `M x K` and `weights` is `K x N`, both row-major raw words in
/// `arch.fmt`. Weights are the stored multiplicands. Accumulation is exact.
pub fn execute_values(
    arch: &ArchConfig,
    mapping: &Mapping,
    inputs: &[u32],
    weights: &[u32],
) -> Result<Vec<f64>> {
    let GemmShape { m, k, n } = mapping.shape;
    let (m, k, n) = (m as usize, k as usize, n as usize);
    if inputs.len() != m * k || weights.len() != k * n {
        return Err(Error::ShapeMismatch(format!(
            "expected {}x{} inputs and {}x{} weights, got {} and {}",
            m,
            k,
            k,
            n,
            inputs.len(),
            weights.len()
        )));
    }
    let mut acc: Vec<ExactSum> = (0..m * n).map(|_| ExactSum::new(arch.fmt)).collect();
    for row in 0..m {
        for bank in &mapping.banks {
            for rg in bank {
                let x = inputs[row * k + rg.k as usize];
                for col in rg.n_start as usize..rg.n_start as usize + rg.n_len as usize {
                    let wv = weights[rg.k as usize * n + col];
                    acc[row * n + col].add(fp_mul(wv, x, &arch.fmt, &arch.mul)?);
                }
            }
        }
    }
    Ok(acc.iter().map(ExactSum::value).collect())
}
