//! One-pass isomorphism decision over an edge stream. The state is the
//! residues of `s(M)` modulo a handful of primes plus a table renaming
//! external ids to `0..n`, all charged to a space meter in bits.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use crate::decision::{pow_mod, prime_width, sample_primes, EdgeOrder, Fingerprint};
use crate::error::{Error, Result};
use crate::graph::{next_permutation, parse_edge_line, Graph, BRUTE_FORCE_CAP};
use crate::rng::{keyed_rng, TAG_PRIMES};
use crate::sim::width_for;

/// Bits of algorithm state currently held, and the most ever held.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpaceMeter {
    current: usize,
    peak: usize,
}

impl SpaceMeter {
    pub fn charge(&mut self, bits: usize) {
        self.current += bits;
        self.peak = self.peak.max(self.current);
    }

    pub fn release(&mut self, bits: usize) {
        self.current = self.current.saturating_sub(bits);
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}

/// Space budget `64 n ceil(log2 n)` in bits.
pub fn space_budget(n: usize) -> usize {
    64 * n * (n.max(2) as f64).log2().ceil() as usize
}

#[derive(Clone, Debug)]
pub struct StreamState {
    n: usize,
    width: usize,
    primes: Vec<u64>,
    residues: Vec<u64>,
    edges_seen: usize,
    /// `None`: ids are already `0..n`. Otherwise names are handed out in
    /// order of first appearance.
    rename: Option<HashMap<u64, usize>>,
    meter: SpaceMeter,
    // validation only, not algorithm state: rejects duplicate edges
    seen: BTreeSet<(usize, usize)>,
}

impl StreamState {
    pub fn new(n: usize, primes: Vec<u64>) -> Result<Self> {
        let width = prime_width(n);
        if let Some(&p) = primes.iter().find(|&&p| p < 2 || width_for(p) > width) {
            return Err(Error::Input(format!("{p} is not a usable prime for n = {n}")));
        }
        let mut meter = SpaceMeter::default();
        // primes, residues, edge counter
        meter.charge(2 * primes.len() * width + width_for((n * n) as u64));
        Ok(StreamState {
            n,
            width,
            residues: vec![0; primes.len()],
            primes,
            edges_seen: 0,
            rename: None,
            meter,
            seen: BTreeSet::new(),
        })
    }

    /// `k` primes from the stream drawn as the decision protocol draws them
    /// (`k = None` gives `2n`).
    pub fn seeded(n: usize, k: Option<usize>, seed: u64) -> Result<Self> {
        let primes = sample_primes(n, k.unwrap_or(2 * n), &mut keyed_rng(seed, &[TAG_PRIMES, 0]));
        Self::new(n, primes)
    }

    /// Accept arbitrary external ids, renamed on first appearance.
    pub fn with_renaming(mut self) -> Self {
        self.rename = Some(HashMap::new());
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges_seen(&self) -> usize {
        self.edges_seen
    }

    pub fn meter(&self) -> &SpaceMeter {
        &self.meter
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            primes: self.primes.clone(),
            residues: self.residues.clone(),
        }
    }

    fn rename(&mut self, ext: u64) -> Result<usize> {
        let Some(table) = self.rename.as_mut() else {
            return if ext < self.n as u64 {
                Ok(ext as usize)
            } else {
                Err(Error::NodeOutOfRange {
                    node: ext as usize,
                    n: self.n,
                })
            };
        };
        if let Some(&v) = table.get(&ext) {
            return Ok(v);
        }
        let v = table.len();
        if v == self.n {
            return Err(Error::Input(format!(
                "external id {ext} does not fit: all {} names are taken",
                self.n
            )));
        }
        table.insert(ext, v);
        self.meter.charge(64 + width_for(self.n as u64));
        Ok(v)
    }
}

pub fn stream_update(st: &mut StreamState, u: u64, v: u64) -> Result<()> {
    if u == v {
        return Err(Error::Input(format!("self-loop on {u}")));
    }
    let a = st.rename(u)?;
    let b = st.rename(v)?;
    if !st.seen.insert((a.min(b), a.max(b))) {
        return Err(Error::Input(format!("duplicate edge {{{u}, {v}}}")));
    }
    let idx = EdgeOrder { n: st.n }.index(a, b) as u64;
    for (r, &p) in st.residues.iter_mut().zip(&st.primes) {
        *r = (*r + pow_mod(2, idx, p)) % p;
    }
    st.edges_seen += 1;
    Ok(())
}

/// Feeds a text edge stream line by line.
pub fn stream_read<R: BufRead>(st: &mut StreamState, reader: R) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        if let Some(edge) = parse_edge_line(i + 1, &line?) {
            let (u, v) = edge?;
            stream_update(st, u, v)?;
        }
    }
    Ok(())
}

/// Walks the permutations of `gk` in lexicographic order, holding one at a
/// time, and accepts on the first whose residues all match.
pub fn stream_decide(st: &mut StreamState, gk: &Graph) -> Result<bool> {
    let n = st.n;
    if gk.n() != n {
        return Err(Error::SizeMismatch { left: n, right: gk.n() });
    }
    if n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let order = EdgeOrder { n };
    let id_width = width_for(n as u64);
    // permutation, prime counter, running sum
    let held = n * id_width + width_for(st.primes.len() as u64) + st.width;
    st.meter.charge(held);
    let mut perm: Vec<usize> = (0..n).collect();
    let accept = loop {
        let matches = st.primes.iter().zip(&st.residues).all(|(&p, &r)| {
            let s = gk.edges().fold(0, |acc, (u, v)| {
                (acc + pow_mod(2, order.index(perm[u], perm[v]) as u64, p)) % p
            });
            s == r
        });
        if matches {
            break true;
        }
        if !next_permutation(&mut perm) {
            break false;
        }
    };
    st.meter.release(held);
    Ok(accept)
}
