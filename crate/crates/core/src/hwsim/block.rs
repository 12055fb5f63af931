//! One layer block: a memory block (double-banked input BRAM plus the
//! windowing BRAM) feeding a processing unit of `P` row registers.
//!
//! Per image the block runs three kinds of cycles:
//!
//! * copy: one input row per cycle from BRAM1 to BRAM2 (`j·k` cycles). With
//!   stride 2 the row is decimated on the way, keeping the column parity of
//!   the map's kept tap.
//! * processing: one BRAM2 row window per cycle, added to or subtracted from
//!   all `P` registers according to the weight bits (`k` cycles per pass).
//! * writeback: the `P` registers leave one per cycle through ReLU towards
//!   the next layer (`P` cycles per pass).
//!
//! There are `j·ℓ/P` passes, one per output row and group of `P` output maps.

use serde::Serialize;

use super::bram::BramModel;
use super::{LayerConfig, SimError};
use crate::binary::BinaryWeightPlane;
use crate::mask::kept_position;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Copying,
    Processing,
    Writeback,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Copying => "copying",
            Phase::Processing => "processing",
            Phase::Writeback => "writeback",
        }
    }
}

/// Handshake levels during the current cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Signals {
    /// First input vector of a pass is being read; registers start from zero.
    pub fi: bool,
    /// Registers are being drained to the next layer.
    pub enable_s: bool,
    /// Last row of the layer has been written.
    pub itter_done: bool,
}

/// Pulse counts and per-phase cycle tallies over a block's lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BlockStats {
    pub fi_pulses: u64,
    pub enable_s_pulses: u64,
    pub itter_done_pulses: u64,
    pub copy_cycles: u64,
    pub processing_cycles: u64,
    pub writeback_cycles: u64,
    pub saturations: u64,
    pub images: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BankState {
    Empty,
    /// Reserved by the upstream writer for this image.
    Filling(usize),
    /// Holds this image; usable from the given cycle on.
    Full { image: usize, ready: u64 },
}

/// A row leaving the processing unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WritebackRow {
    pub image: usize,
    /// Output map.
    pub map: usize,
    /// Output row after striding.
    pub row: usize,
    /// Register lanes before the ReLU.
    pub pre_activation: Vec<i32>,
    /// Lanes after the ReLU, as written.
    pub values: Vec<i32>,
}

/// Architectural state of one layer block.
#[derive(Debug, Clone)]
pub struct LayerBlockState {
    pub(crate) cfg: LayerConfig,
    bits: BinaryWeightPlane,
    pub(crate) bram1: [BramModel; 2],
    pub(crate) banks: [BankState; 2],
    bram2: BramModel,
    registers: Vec<Vec<i32>>,
    signals: Signals,
    phase: Phase,
    image: usize,
    next_image: usize,
    copy_index: usize,
    row: usize,
    group: usize,
    k: usize,
    lane: usize,
    started_at: u64,
    last_cycles: Option<u64>,
    stats: BlockStats,
    window: Vec<i32>,
    scratch: Vec<i32>,
}

impl LayerBlockState {
    pub fn new(name: &str, cfg: LayerConfig, bits: BinaryWeightPlane) -> Result<Self, SimError> {
        cfg.validate()?;
        let shape = bits.shape();
        if (shape.width, shape.height, shape.in_maps, shape.out_maps) != (3, 3, cfg.k_max, cfg.l_max) {
            return Err(SimError::Shape(format!(
                "{name}: weights {shape:?} do not match a 3x3 {}→{} layer",
                cfg.k_max, cfg.l_max
            )));
        }
        if bits.group_width() != cfg.p {
            return Err(SimError::Shape(format!(
                "{name}: weights packed for P = {}, layer uses P = {}",
                bits.group_width(),
                cfg.p
            )));
        }
        let depth = cfg.k_max * cfg.j_max;
        let bank = |i| BramModel::new(format!("{name}.bram1[{i}]"), depth, cfg.j_max);
        Ok(Self {
            bram1: [bank(0), bank(1)],
            banks: [BankState::Empty; 2],
            bram2: BramModel::new(format!("{name}.bram2"), depth, cfg.bram2_width()),
            registers: vec![vec![0; cfg.out_width()]; cfg.p],
            signals: Signals::default(),
            phase: Phase::Idle,
            image: 0,
            next_image: 0,
            copy_index: 0,
            row: 0,
            group: 0,
            k: 0,
            lane: 0,
            started_at: 0,
            last_cycles: None,
            stats: BlockStats::default(),
            window: vec![0; cfg.out_width()],
            scratch: vec![0; cfg.bram2_width()],
            cfg,
            bits,
        })
    }

    pub fn config(&self) -> &LayerConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn signals(&self) -> Signals {
        self.signals
    }

    pub fn stats(&self) -> BlockStats {
        self.stats
    }

    pub fn registers(&self) -> &[Vec<i32>] {
        &self.registers
    }

    pub fn bram2(&self) -> &BramModel {
        &self.bram2
    }

    /// Cycles the most recently finished image spent in this block.
    pub fn last_image_cycles(&self) -> Option<u64> {
        self.last_cycles
    }

    /// Image the block will accept next.
    pub fn next_image(&self) -> usize {
        self.next_image
    }

    /// Loads image maps (`k_max` maps of `j_max` rows, raw values) into a
    /// BRAM1 bank without spending cycles, marking it ready at `ready`.
    pub fn preload(&mut self, image: usize, rows: &[Vec<i32>], ready: u64) -> Result<(), SimError> {
        let bank = image % 2;
        if self.banks[bank] != BankState::Empty {
            return Err(SimError::NextLayerBusy { image, bank });
        }
        if rows.len() != self.bram1[bank].depth() {
            return Err(SimError::Shape(format!(
                "{} rows for a {}-row BRAM",
                rows.len(),
                self.bram1[bank].depth()
            )));
        }
        for (r, values) in rows.iter().enumerate() {
            self.bram1[bank].poke_row(r, values)?;
        }
        self.banks[bank] = BankState::Full { image, ready };
        Ok(())
    }

    pub(crate) fn bank_free(&self, image: usize) -> bool {
        self.banks[image % 2] == BankState::Empty
    }

    pub(crate) fn reserve_bank(&mut self, image: usize) {
        debug_assert!(self.bank_free(image));
        self.banks[image % 2] = BankState::Filling(image);
    }

    pub(crate) fn receive(&mut self, cycle: u64, rows: &WritebackRow, offset: usize) -> Result<(), SimError> {
        let bank = rows.image % 2;
        if self.banks[bank] != BankState::Filling(rows.image) {
            return Err(SimError::NextLayerBusy {
                image: rows.image,
                bank,
            });
        }
        let width = self.cfg.j_max;
        if offset + rows.values.len() > width {
            return Err(SimError::Shape(format!(
                "{} lanes at offset {offset} do not fit a {width}-lane row",
                rows.values.len()
            )));
        }
        let mut padded = vec![0; width];
        padded[offset..offset + rows.values.len()].copy_from_slice(&rows.values);
        self.bram1[bank].write_row(cycle, rows.map * self.cfg.j_max + rows.row, &padded)
    }

    pub(crate) fn seal(&mut self, image: usize, ready: u64) {
        self.banks[image % 2] = BankState::Full { image, ready };
    }

    /// Whether the block could start its next image at `cycle`.
    pub fn input_ready(&self, cycle: u64) -> bool {
        matches!(
            self.banks[self.next_image % 2],
            BankState::Full { image, ready } if image == self.next_image && ready <= cycle
        )
    }

    /// Advances one clock. `downstream_free` says whether the consumer can
    /// take the next image; the block reserves nothing itself, the caller does
    /// when this returns [`Tick::Started`].
    pub fn tick(&mut self, cycle: u64, downstream_free: bool) -> Result<Tick, SimError> {
        self.signals = Signals::default();
        let mut started = false;
        if self.phase == Phase::Idle {
            if !(self.input_ready(cycle) && downstream_free) {
                return Ok(Tick::Idle);
            }
            self.image = self.next_image;
            self.next_image += 1;
            self.phase = Phase::Copying;
            self.copy_index = 0;
            self.started_at = cycle;
            started = true;
        }
        let out = match self.phase {
            Phase::Copying => {
                self.copy_cycle(cycle)?;
                None
            }
            Phase::Processing => {
                self.processing_cycle(cycle)?;
                None
            }
            Phase::Writeback => self.writeback_cycle(cycle),
            Phase::Idle => unreachable!(),
        };
        Ok(match (started, out) {
            (_, Some(row)) => Tick::Wrote(row),
            (true, None) => Tick::Started(self.image),
            (false, None) => Tick::Busy,
        })
    }

    fn copy_cycle(&mut self, cycle: u64) -> Result<(), SimError> {
        let (j, k_max) = (self.cfg.j_max, self.cfg.k_max);
        let addr = self.copy_index;
        let k = addr / j;
        let bank = self.image % 2;
        let src = self.bram1[bank].read_row(cycle, addr)?;
        if self.cfg.stride == 1 {
            self.scratch.copy_from_slice(src);
        } else {
            // Stride-2 multiplexers: keep the columns whose parity matches
            // the kept tap of this map.
            let (iota, _) = kept_position(k, 3, 3);
            let parity = iota % 2;
            for (c, dst) in self.scratch.iter_mut().enumerate() {
                *dst = src.get(2 * c + parity).copied().unwrap_or(0);
            }
        }
        self.bram2.write_row(cycle, addr, &self.scratch)?;
        self.stats.copy_cycles += 1;
        self.copy_index += 1;
        if self.copy_index == j * k_max {
            // Everything now lives in BRAM2; the bank can take the next image.
            self.banks[bank] = BankState::Empty;
            self.phase = Phase::Processing;
            self.row = 0;
            self.group = 0;
            self.k = 0;
        }
        Ok(())
    }

    fn processing_cycle(&mut self, cycle: u64) -> Result<(), SimError> {
        let cfg = self.cfg;
        let fmt = cfg.fmt;
        let k = self.k;
        let (iota, lambda) = kept_position(k, 3, 3);
        let src_row = self.row as isize + lambda as isize - 1;
        let first = k == 0;
        self.signals.fi = first;
        if first {
            self.stats.fi_pulses += 1;
        }
        let in_range = (0..cfg.j_max as isize).contains(&src_row);
        if in_range {
            let row = self.bram2.read_row(cycle, k * cfg.j_max + src_row as usize)?;
            let offset = if cfg.stride == 1 { iota } else { iota / 2 };
            self.window.copy_from_slice(&row[offset..offset + cfg.out_width()]);
        }
        for (reg, positive) in self.registers.iter_mut().zip(self.bits.word(self.group, k)) {
            if first {
                reg.iter_mut().for_each(|v| *v = 0);
            }
            if !in_range {
                continue;
            }
            for (acc, &x) in reg.iter_mut().zip(&self.window) {
                let mut term = x;
                if !positive {
                    let (neg, hit) = fmt.negate_raw(term);
                    self.stats.saturations += hit as u64;
                    term = neg;
                }
                let (sum, hit) = fmt.add_raw(*acc, term);
                self.stats.saturations += hit as u64;
                *acc = sum;
            }
        }
        self.stats.processing_cycles += 1;
        self.k += 1;
        if self.k == cfg.k_max {
            self.phase = Phase::Writeback;
            self.lane = 0;
        }
        Ok(())
    }

    fn writeback_cycle(&mut self, cycle: u64) -> Option<WritebackRow> {
        let cfg = self.cfg;
        self.signals.enable_s = true;
        if self.lane == 0 {
            self.stats.enable_s_pulses += 1;
        }
        let p = self.lane;
        let keep_row = self.row % cfg.stride == 0;
        let out = keep_row.then(|| {
            let pre = self.registers[p].clone();
            WritebackRow {
                image: self.image,
                map: self.group * cfg.p + p,
                row: self.row / cfg.stride,
                values: pre.iter().map(|v| (*v).max(0)).collect(),
                pre_activation: pre,
            }
        });
        self.stats.writeback_cycles += 1;
        self.lane += 1;
        if self.lane == cfg.p {
            self.group += 1;
            self.k = 0;
            self.phase = Phase::Processing;
            if self.group == cfg.l_max / cfg.p {
                self.group = 0;
                self.row += 1;
                if self.row == cfg.j_max {
                    self.signals.itter_done = true;
                    self.stats.itter_done_pulses += 1;
                    self.stats.images += 1;
                    self.last_cycles = Some(cycle + 1 - self.started_at);
                    self.phase = Phase::Idle;
                }
            }
        }
        out
    }
}

/// What a block did during one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tick {
    Idle,
    /// Began the given image this cycle.
    Started(usize),
    Busy,
    Wrote(WritebackRow),
}
