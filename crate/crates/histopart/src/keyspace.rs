//! Key universes and their placement across processors.
//!
//! Keys are distinct `u64` values produced by accumulating positive random
//! gaps, so global rank `r` (1-based) always refers to the `r`-th smallest
//! key. The universe depends only on `(n, seed, gap mode)` — never on `p` or
//! the placement — which is what makes layout-comparison experiments
//! meaningful: the same seed yields the same keys under every layout.
//!
//! Placements:
//! * `uniform` — keys dealt uniformly at random, `n/p` per processor;
//! * `adversarial` — the sorted order is cut into `p` intervals of `n/p`
//!   ranks, the intervals are grouped into `c` parts, every interval is cut
//!   again into `c` subintervals, and within each part its `p` subintervals
//!   are assigned to the `p` processors by a uniform random bijection;
//! * `sorted_blocks` — processor `i` holds the `i`-th block of consecutive
//!   ranks (pre-sorted input);
//! * `zipf_gaps` — uniform deal of a universe whose value gaps are heavy
//!   tailed instead of uniform.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyspaceError {
    #[error("need at least one processor")]
    NoProcessors,
    #[error("processor count {p} must divide the key count {n}")]
    UnevenKeys { n: u64, p: usize },
    #[error("part count {c} must divide the processor count {p}")]
    UnevenParts { c: usize, p: usize },
    #[error("p*c = {pc} must divide the key count {n} (whole subintervals)")]
    UnevenSubintervals { pc: u64, n: u64 },
    #[error("key {0} is not part of this input")]
    UnknownKey(u64),
    #[error("rank {rank} outside 1..={n}")]
    RankOutOfRange { rank: u64, n: u64 },
    #[error("processor index {proc} outside 0..{p}")]
    ProcessorOutOfRange { proc: usize, p: usize },
    #[error("dump directory {0} already has a manifest")]
    AlreadyDumped(String),
    #[error("bad input dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad manifest: {0}")]
    BadManifest(#[from] serde_json::Error),
}

/// How the keys were placed; carried along for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayoutTag {
    Uniform,
    Adversarial { c: usize },
    SortedBlocks,
    ZipfGaps,
}

impl fmt::Display for LayoutTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutTag::Uniform => write!(f, "uniform"),
            LayoutTag::Adversarial { c } => write!(f, "adversarial(c={c})"),
            LayoutTag::SortedBlocks => write!(f, "sorted_blocks"),
            LayoutTag::ZipfGaps => write!(f, "zipf_gaps"),
        }
    }
}

/// Skewed-input flavours for `gen_skewed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkewMode {
    SortedBlocks,
    ZipfGaps,
}

/// Parameters of the adversarial placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarialParams {
    /// Number of parts; must divide `p`, and `p*c` must divide `n`.
    pub c: usize,
}

impl AdversarialParams {
    /// Largest divisor of `p` that is at most `floor(sqrt(p))` — the usual
    /// "square-root-many parts" choice, snapped down to a divisor.
    pub fn default_for(p: usize) -> Self {
        let root = (p as f64).sqrt().floor() as usize;
        let c = (1..=root.max(1)).rev().find(|&d| p.is_multiple_of(d)).unwrap_or(1);
        AdversarialParams { c }
    }
}

/// `n` distinct keys spread over `p` processors. Local sequences are kept
/// sorted (the algorithms only ever ask membership / counting questions, so
/// the within-processor order is normalised away).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalInput {
    n: u64,
    p: usize,
    /// Sorted keys per processor, each of length `n/p`.
    locals: Vec<Vec<u64>>,
    /// All keys, sorted; index `r-1` is the key of global rank `r`.
    universe: Vec<u64>,
    /// `owner[r-1]` is the processor holding the key of rank `r`.
    owner: Vec<u32>,
    layout: LayoutTag,
    seed: u64,
}

fn check_divisibility(n: u64, p: usize) -> Result<(), KeyspaceError> {
    if p == 0 {
        return Err(KeyspaceError::NoProcessors);
    }
    if n == 0 || !n.is_multiple_of(p as u64) {
        return Err(KeyspaceError::UnevenKeys { n, p });
    }
    Ok(())
}

/// Sorted distinct keys from cumulative positive gaps. Depends only on the
/// arguments, not on any placement decision.
fn universe_keys(n: u64, seed: u64, zipf_gaps: bool) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = Vec::with_capacity(n as usize);
    let mut acc = 0u64;
    if zipf_gaps {
        // Heavy-tailed value gaps; exponent close to 1 gives a wide spread.
        let zipf = Zipf::new((1u64 << 20) as f64, 1.1).expect("static zipf parameters");
        for _ in 0..n {
            acc += zipf.sample(&mut rng).round() as u64;
            keys.push(acc);
        }
    } else {
        for _ in 0..n {
            acc += rng.random_range(1..=1u64 << 40);
            keys.push(acc);
        }
    }
    keys
}

/// RNG for placement decisions: same seed as the universe but a different
/// ChaCha stream, so universe and layout draws never alias.
fn layout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl GlobalInput {
    fn from_owner(
        n: u64,
        p: usize,
        universe: Vec<u64>,
        owner: Vec<u32>,
        layout: LayoutTag,
        seed: u64,
    ) -> Self {
        let per = (n / p as u64) as usize;
        let mut locals = vec![Vec::with_capacity(per); p];
        for (idx, &o) in owner.iter().enumerate() {
            locals[o as usize].push(universe[idx]);
        }
        // Owners are visited in rank order, so each local list is sorted.
        GlobalInput { n, p, locals, universe, owner, layout, seed }
    }

    /// Uniformly random deal: a random permutation of the ranks, chopped into
    /// `p` equal chunks.
    pub fn gen_uniform(n: u64, p: usize, seed: u64) -> Result<Self, KeyspaceError> {
        check_divisibility(n, p)?;
        let universe = universe_keys(n, seed, false);
        let owner = dealt_owner(n, p, &mut layout_rng(seed));
        Ok(Self::from_owner(n, p, universe, owner, LayoutTag::Uniform, seed))
    }

    /// Adversarial placement: one subinterval per (processor, part), chosen
    /// by a fresh random bijection inside every part.
    pub fn gen_adversarial(
        n: u64,
        p: usize,
        params: AdversarialParams,
        seed: u64,
    ) -> Result<Self, KeyspaceError> {
        check_divisibility(n, p)?;
        let c = params.c;
        if c == 0 || !p.is_multiple_of(c) {
            return Err(KeyspaceError::UnevenParts { c, p });
        }
        let pc = (p * c) as u64;
        if !n.is_multiple_of(pc) {
            return Err(KeyspaceError::UnevenSubintervals { pc, n });
        }
        let universe = universe_keys(n, seed, false);
        let sub_len = n / pc; // keys per subinterval
        let mut rng = layout_rng(seed);
        let mut owner = vec![0u32; n as usize];
        // Subinterval s (by rank) lives in interval s / c; interval t lives
        // in part t / (p / c). Enumerating s in order keeps locals sorted.
        let intervals_per_part = p / c;
        let mut assignment: Vec<Vec<u32>> = Vec::with_capacity(c);
        for _ in 0..c {
            let mut procs: Vec<u32> = (0..p as u32).collect();
            procs.shuffle(&mut rng);
            assignment.push(procs);
        }
        let mut taken = vec![0usize; c];
        for s in 0..pc {
            let interval = (s / c as u64) as usize;
            let part = interval / intervals_per_part;
            let proc = assignment[part][taken[part]];
            taken[part] += 1;
            let start = (s * sub_len) as usize;
            owner[start..start + sub_len as usize].fill(proc);
        }
        let layout = LayoutTag::Adversarial { c };
        Ok(Self::from_owner(n, p, universe, owner, layout, seed))
    }

    /// Skewed inputs: already-sorted block placement, or a uniform deal of a
    /// heavy-tailed-gap universe.
    pub fn gen_skewed(
        n: u64,
        p: usize,
        mode: SkewMode,
        seed: u64,
    ) -> Result<Self, KeyspaceError> {
        check_divisibility(n, p)?;
        match mode {
            SkewMode::SortedBlocks => {
                let universe = universe_keys(n, seed, false);
                let per = n / p as u64;
                let owner = (0..n).map(|r| (r / per) as u32).collect();
                Ok(Self::from_owner(n, p, universe, owner, LayoutTag::SortedBlocks, seed))
            }
            SkewMode::ZipfGaps => {
                let universe = universe_keys(n, seed, true);
                let owner = dealt_owner(n, p, &mut layout_rng(seed));
                Ok(Self::from_owner(n, p, universe, owner, LayoutTag::ZipfGaps, seed))
            }
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn layout(&self) -> LayoutTag {
        self.layout
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Keys per processor (`n / p`).
    pub fn keys_per_proc(&self) -> u64 {
        self.n / self.p as u64
    }

    /// Sorted keys held by one processor.
    pub fn local_keys(&self, proc: usize) -> Result<&[u64], KeyspaceError> {
        self.locals
            .get(proc)
            .map(|v| v.as_slice())
            .ok_or(KeyspaceError::ProcessorOutOfRange { proc, p: self.p })
    }

    pub fn all_locals(&self) -> &[Vec<u64>] {
        &self.locals
    }

    /// Count of keys on `proc` that are <= `key` (the key itself need not be
    /// local, or even part of the input).
    pub fn local_rank(&self, proc: usize, key: u64) -> Result<u64, KeyspaceError> {
        let local = self.local_keys(proc)?;
        Ok(local.partition_point(|&x| x <= key) as u64)
    }

    /// Which processor holds the key of global rank `r`.
    pub fn owner_of_rank(&self, rank: u64) -> Result<usize, KeyspaceError> {
        if rank == 0 || rank > self.n {
            return Err(KeyspaceError::RankOutOfRange { rank, n: self.n });
        }
        Ok(self.owner[(rank - 1) as usize] as usize)
    }

    pub fn rank_oracle(&self) -> RankOracle {
        RankOracle { sorted: self.universe.clone() }
    }

    pub fn universe(&self) -> &[u64] {
        &self.universe
    }

    /// Write the input as `proc_<i>.txt` files (one decimal key per line)
    /// plus a `manifest.json` describing how it was generated.
    pub fn dump(&self, dir: &Path) -> Result<(), KeyspaceError> {
        fs::create_dir_all(dir)?;
        let manifest_path = dir.join("manifest.json");
        if manifest_path.exists() {
            return Err(KeyspaceError::AlreadyDumped(dir.display().to_string()));
        }
        for (i, local) in self.locals.iter().enumerate() {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("proc_{i}.txt")))?);
            for key in local {
                writeln!(w, "{key}")?;
            }
            w.flush()?;
        }
        let manifest = Manifest {
            n: self.n,
            p: self.p,
            generator: self.layout,
            seed: self.seed,
        };
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Rebuild an input from a dump directory, revalidating distinctness and
    /// the per-processor counts.
    pub fn load(dir: &Path) -> Result<Self, KeyspaceError> {
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        check_divisibility(manifest.n, manifest.p)?;
        let per = (manifest.n / manifest.p as u64) as usize;
        let mut locals = Vec::with_capacity(manifest.p);
        for i in 0..manifest.p {
            let file = fs::File::open(dir.join(format!("proc_{i}.txt")))?;
            let mut keys = Vec::with_capacity(per);
            for line in BufReader::new(file).lines() {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                keys.push(trimmed.parse::<u64>().map_err(|e| {
                    KeyspaceError::BadDump(format!("proc_{i}.txt: {e}"))
                })?);
            }
            if keys.len() != per {
                return Err(KeyspaceError::BadDump(format!(
                    "proc_{i}.txt holds {} keys, expected {per}",
                    keys.len()
                )));
            }
            keys.sort_unstable();
            locals.push(keys);
        }
        let mut tagged: Vec<(u64, u32)> = locals
            .iter()
            .enumerate()
            .flat_map(|(i, keys)| keys.iter().map(move |&k| (k, i as u32)))
            .collect();
        tagged.sort_unstable();
        if tagged.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(KeyspaceError::BadDump("duplicate key across processors".into()));
        }
        let universe: Vec<u64> = tagged.iter().map(|&(k, _)| k).collect();
        let owner: Vec<u32> = tagged.iter().map(|&(_, o)| o).collect();
        Ok(GlobalInput {
            n: manifest.n,
            p: manifest.p,
            locals,
            universe,
            owner,
            layout: manifest.generator,
            seed: manifest.seed,
        })
    }
}

fn dealt_owner(n: u64, p: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut ranks: Vec<u32> = Vec::with_capacity(n as usize);
    let per = n / p as u64;
    for proc in 0..p as u32 {
        ranks.extend(std::iter::repeat_n(proc, per as usize));
    }
    ranks.shuffle(rng);
    ranks
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    n: u64,
    p: usize,
    generator: LayoutTag,
    seed: u64,
}

/// Global rank queries against the sorted key universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankOracle {
    sorted: Vec<u64>,
}

impl RankOracle {
    pub fn n(&self) -> u64 {
        self.sorted.len() as u64
    }

    /// 1-based rank of a key that is part of the input.
    pub fn rank(&self, key: u64) -> Result<u64, KeyspaceError> {
        match self.sorted.binary_search(&key) {
            Ok(idx) => Ok(idx as u64 + 1),
            Err(_) => Err(KeyspaceError::UnknownKey(key)),
        }
    }

    /// Key of a 1-based rank.
    pub fn key_of_rank(&self, rank: u64) -> Result<u64, KeyspaceError> {
        if rank == 0 || rank > self.n() {
            return Err(KeyspaceError::RankOutOfRange { rank, n: self.n() });
        }
        Ok(self.sorted[(rank - 1) as usize])
    }

    pub fn keys(&self) -> &[u64] {
        &self.sorted
    }
}

/// Structural audit of an adversarial placement, reconstructing subinterval
/// membership from global ranks alone.
#[derive(Debug, Clone, Serialize)]
pub struct AdversarialAudit {
    pub n: u64,
    pub p: usize,
    pub c: usize,
    /// Every (processor, part) pair holds exactly one complete subinterval.
    pub one_subinterval_per_processor_part: bool,
    /// Every processor holds exactly n/p keys.
    pub keys_per_processor_ok: bool,
    /// The union of all local ranks is exactly 1..=n.
    pub reconstruction_ok: bool,
    pub pass: bool,
}

pub fn audit_adversarial(input: &GlobalInput, c: usize) -> Result<AdversarialAudit, KeyspaceError> {
    let n = input.n();
    let p = input.p();
    if c == 0 || !p.is_multiple_of(c) {
        return Err(KeyspaceError::UnevenParts { c, p });
    }
    let pc = (p * c) as u64;
    if !n.is_multiple_of(pc) {
        return Err(KeyspaceError::UnevenSubintervals { pc, n });
    }
    let oracle = input.rank_oracle();
    let sub_len = n / pc;
    let intervals_per_part = (p / c) as u64;
    let mut keys_per_processor_ok = true;
    let mut one_each = true;
    let mut seen_ranks = 0u64;
    // counts[proc][part] = how many keys of that part the processor holds.
    let mut counts = vec![vec![0u64; c]; p];
    for (proc, per_part) in counts.iter_mut().enumerate() {
        let local = input.local_keys(proc)?;
        if local.len() as u64 != n / p as u64 {
            keys_per_processor_ok = false;
        }
        for &key in local {
            let rank = oracle.rank(key)?;
            let sub = (rank - 1) / sub_len;
            let interval = sub / c as u64;
            let part = (interval / intervals_per_part) as usize;
            per_part[part] += 1;
            seen_ranks += 1;
        }
    }
    // Exactly one subinterval per (processor, part) means exactly sub_len
    // keys of every part on every processor, arranged contiguously in rank
    // space. Contiguity: the ranks of that part on that processor must form
    // a single subinterval, i.e. all land in the same `sub` index.
    if counts.iter().any(|row| row.iter().any(|&count| count != sub_len)) {
        one_each = false;
    }
    if one_each {
        // Verify contiguity: each processor's keys in a part occupy one sub.
        'contig: for proc in 0..p {
            let local = input.local_keys(proc)?;
            let mut sub_of_part: Vec<Option<u64>> = vec![None; c];
            for &key in local {
                let rank = oracle.rank(key)?;
                let sub = (rank - 1) / sub_len;
                let interval = sub / c as u64;
                let part = (interval / intervals_per_part) as usize;
                match sub_of_part[part] {
                    None => sub_of_part[part] = Some(sub),
                    Some(s) if s == sub => {}
                    Some(_) => {
                        one_each = false;
                        break 'contig;
                    }
                }
            }
        }
    }
    let reconstruction_ok = seen_ranks == n && oracle.n() == n;
    let pass = one_each && keys_per_processor_ok && reconstruction_ok;
    Ok(AdversarialAudit {
        n,
        p,
        c,
        one_subinterval_per_processor_part: one_each,
        keys_per_processor_ok,
        reconstruction_ok,
        pass,
    })
}
