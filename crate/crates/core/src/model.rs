//! Gene models, read types and their placements on isoforms.
//!
//! All coordinates are 1-based and inclusive. A read type is identified by
//! its *signature*: the exon-relative intervals covered by the sequenced
//! bases. Two placements on different isoforms that cover the same exon
//! intervals produce the same nucleotide sequence and are therefore the same
//! read type.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GeneSpec;

/// Upper bound on the summed exon length of a gene.
pub const MAX_GENE_LENGTH: u64 = 1 << 30;

/// One isoform: an ordered subset of the gene's exons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Isoform {
    pub id: String,
    pub exons: Vec<usize>,
    /// 0-based isoform offset at which each exon starts.
    offsets: Vec<u32>,
    length: u32,
}

impl Isoform {
    pub fn length(&self) -> u32 {
        self.length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GeneSpec", into = "GeneSpec")]
pub struct GeneModel {
    pub gene_id: String,
    exon_lengths: Vec<u32>,
    isoforms: Vec<Isoform>,
}

impl GeneModel {
    /// Builds a gene with isoform ids `iso1`, `iso2`, ...
    pub fn new(gene_id: impl Into<String>, exon_lengths: Vec<u32>, isoforms: Vec<Vec<usize>>) -> Result<Self> {
        let named = isoforms.into_iter().enumerate().map(|(i, exons)| (format!("iso{}", i + 1), exons)).collect();
        Self::with_ids(gene_id, exon_lengths, named)
    }

    pub fn with_ids(
        gene_id: impl Into<String>,
        exon_lengths: Vec<u32>,
        isoforms: Vec<(String, Vec<usize>)>,
    ) -> Result<Self> {
        if exon_lengths.is_empty() {
            return Err(Error::InvalidGene("exon list is empty".into()));
        }
        if let Some(e) = exon_lengths.iter().position(|&l| l == 0) {
            return Err(Error::InvalidGene(format!("exon {e} has zero length")));
        }
        if exon_lengths.iter().map(|&l| u64::from(l)).sum::<u64>() > MAX_GENE_LENGTH {
            return Err(Error::InvalidGene(format!("total exon length exceeds {MAX_GENE_LENGTH} bp")));
        }
        if isoforms.is_empty() {
            return Err(Error::InvalidGene("gene has no isoforms".into()));
        }
        let mut seen = BTreeSet::new();
        let mut built = Vec::with_capacity(isoforms.len());
        for (id, exons) in isoforms {
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidGene(format!("duplicate isoform id {id:?}")));
            }
            if exons.is_empty() {
                return Err(Error::InvalidGene(format!("isoform {id:?} has no exons")));
            }
            if let Some(&bad) = exons.iter().find(|&&e| e >= exon_lengths.len()) {
                return Err(Error::InvalidGene(format!(
                    "isoform {id:?} references exon {bad}, but the gene has {} exons",
                    exon_lengths.len()
                )));
            }
            if exons.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGene(format!("isoform {id:?} exon indices are not strictly increasing")));
            }
            let mut offsets = Vec::with_capacity(exons.len());
            let mut length = 0u32;
            for &e in &exons {
                offsets.push(length);
                length += exon_lengths[e];
            }
            built.push(Isoform { id, exons, offsets, length });
        }
        Ok(GeneModel { gene_id: gene_id.into(), exon_lengths, isoforms: built })
    }

    pub fn exon_lengths(&self) -> &[u32] {
        &self.exon_lengths
    }

    pub fn isoforms(&self) -> &[Isoform] {
        &self.isoforms
    }

    pub fn num_isoforms(&self) -> usize {
        self.isoforms.len()
    }

    /// Isoform lengths `l_i`.
    pub fn isoform_lengths(&self) -> Vec<u32> {
        self.isoforms.iter().map(|iso| iso.length).collect()
    }

    pub fn isoform_index(&self, id: &str) -> Option<usize> {
        self.isoforms.iter().position(|iso| iso.id == id)
    }

    pub fn min_isoform_length(&self) -> u32 {
        self.isoforms.iter().map(|iso| iso.length).min().unwrap_or(0)
    }

    /// Exon-relative segments covered by `len` bases starting at isoform
    /// position `start`. `None` when the interval runs off the isoform.
    pub fn segments(&self, isoform: usize, start: u32, len: u32) -> Option<Vec<Segment>> {
        let iso = &self.isoforms[isoform];
        if start == 0 || len == 0 || u64::from(start) + u64::from(len) - 1 > u64::from(iso.length) {
            return None;
        }
        // index of the exon holding `start`
        let mut k = iso.offsets.partition_point(|&o| o < start) - 1;
        let mut pos = start;
        let end = start + len - 1;
        let mut out = Vec::with_capacity(2);
        while pos <= end {
            let exon = iso.exons[k];
            let exon_first = iso.offsets[k] + 1;
            let exon_last = iso.offsets[k] + self.exon_lengths[exon];
            let last = end.min(exon_last);
            out.push(Segment { exon: exon as u32, first: pos - exon_first + 1, last: last - exon_first + 1 });
            pos = last + 1;
            k += 1;
        }
        Some(out)
    }

    /// Isoform position of base `offset` (1-based) of `exon`.
    fn locate(&self, isoform: usize, exon: u32, offset: u32) -> Option<u32> {
        let iso = &self.isoforms[isoform];
        let k = iso.exons.binary_search(&(exon as usize)).ok()?;
        Some(iso.offsets[k] + offset)
    }

    /// Start position of a mate with the given segments on `isoform`.
    fn place_mate(&self, isoform: usize, segs: &[Segment]) -> Option<u32> {
        let first = segs.first()?;
        let pos = self.locate(isoform, first.exon, first.first)?;
        let len = segments_len(segs);
        match self.segments(isoform, pos, len) {
            Some(found) if found == segs => Some(pos),
            _ => None,
        }
    }

    fn placement(&self, isoform: usize, signature: &Signature) -> Option<Placement> {
        let length = self.isoforms[isoform].length;
        let (start, end) = match signature {
            Signature::Single(segs) => {
                let start = self.place_mate(isoform, segs)?;
                (start, start + segments_len(segs) - 1)
            }
            Signature::Paired(m1, m2) => {
                let start = self.place_mate(isoform, m1)?;
                let m2_start = self.place_mate(isoform, m2)?;
                if m2_start < start {
                    return None;
                }
                (start, m2_start + segments_len(m2) - 1)
            }
        };
        Some(Placement { start, end, boundary: start == 1 || end == length })
    }

    /// The read type produced by a single-end read of length `read_length`
    /// starting at `start` on `isoform`.
    pub fn single_read(&self, isoform: usize, start: u32, read_length: u32) -> Result<ReadType> {
        self.check_isoform(isoform)?;
        let segs = self.segments(isoform, start, read_length).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "read [{start}, {}] does not fit on isoform {isoform}",
                start + read_length.saturating_sub(1)
            ))
        })?;
        Ok(ReadType::from_signature(self, Signature::Single(segs))
            .expect("generating isoform always hosts its own read"))
    }

    /// The read type produced by a pair of mates of length `read_length`
    /// sequenced from the fragment `[start, start + fragment_length - 1]`.
    pub fn paired_read(&self, isoform: usize, start: u32, fragment_length: u32, read_length: u32) -> Result<ReadType> {
        self.check_isoform(isoform)?;
        if fragment_length < read_length {
            return Err(Error::InvalidArgument(format!(
                "fragment length {fragment_length} is shorter than read length {read_length}"
            )));
        }
        let fits =
            start >= 1 && u64::from(start) + u64::from(fragment_length) - 1 <= u64::from(self.isoforms[isoform].length);
        if !fits {
            return Err(Error::InvalidArgument(format!(
                "fragment of length {fragment_length} at {start} does not fit on isoform {isoform}"
            )));
        }
        let end = start + fragment_length - 1;
        let m1 = self.segments(isoform, start, read_length);
        let m2 = self.segments(isoform, end + 1 - read_length, read_length);
        match (m1, m2) {
            (Some(m1), Some(m2)) if end <= self.isoforms[isoform].length => {
                Ok(ReadType::from_signature(self, Signature::Paired(m1, m2))
                    .expect("generating isoform always hosts its own read"))
            }
            _ => Err(Error::InvalidArgument(format!("fragment [{start}, {end}] does not fit on isoform {isoform}"))),
        }
    }

    fn check_isoform(&self, isoform: usize) -> Result<()> {
        if isoform >= self.isoforms.len() {
            return Err(Error::InvalidArgument(format!("isoform index {isoform} out of range")));
        }
        Ok(())
    }
}

/// A run of bases inside one exon, 1-based inclusive exon offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment {
    pub exon: u32,
    pub first: u32,
    pub last: u32,
}

fn segments_len(segs: &[Segment]) -> u32 {
    segs.iter().map(|s| s.last - s.first + 1).sum()
}

/// Canonical sequence identity of a read type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Signature {
    Single(Vec<Segment>),
    Paired(Vec<Segment>, Vec<Segment>),
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn mate(f: &mut fmt::Formatter<'_>, segs: &[Segment]) -> fmt::Result {
            for (i, s) in segs.iter().enumerate() {
                if i > 0 {
                    f.write_str("+")?;
                }
                write!(f, "e{}:{}-{}", s.exon, s.first, s.last)?;
            }
            Ok(())
        }
        match self {
            Signature::Single(segs) => mate(f, segs),
            Signature::Paired(m1, m2) => {
                mate(f, m1)?;
                f.write_str("/")?;
                mate(f, m2)
            }
        }
    }
}

/// Where a read type sits on one isoform. For single-end reads `end` is the
/// last base of the read; for pairs it is the 3' end of the second mate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub start: u32,
    pub end: u32,
    /// The fragment touches the first or last base of the isoform.
    pub boundary: bool,
}

impl Placement {
    pub fn fragment_length(&self) -> u32 {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadKind {
    Single,
    Paired,
}

/// A distinct read signature together with its placement on every isoform
/// of the gene (`None` where the isoform cannot produce it).
///
/// Equality, ordering and hashing look at the signature only.
#[derive(Debug, Clone)]
pub struct ReadType {
    signature: Signature,
    placements: Vec<Option<Placement>>,
}

impl ReadType {
    /// Places `signature` on every isoform; `None` if no isoform hosts it.
    pub fn from_signature(gene: &GeneModel, signature: Signature) -> Option<Self> {
        let placements: Vec<_> = (0..gene.num_isoforms()).map(|i| gene.placement(i, &signature)).collect();
        if placements.iter().all(Option::is_none) {
            return None;
        }
        Some(ReadType { signature, placements })
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn kind(&self) -> ReadKind {
        match self.signature {
            Signature::Single(_) => ReadKind::Single,
            Signature::Paired(..) => ReadKind::Paired,
        }
    }

    /// Sequenced length of one mate.
    pub fn read_length(&self) -> u32 {
        match &self.signature {
            Signature::Single(segs) | Signature::Paired(segs, _) => segments_len(segs),
        }
    }

    pub fn placements(&self) -> &[Option<Placement>] {
        &self.placements
    }

    pub fn placement(&self, isoform: usize) -> Option<Placement> {
        self.placements.get(isoform).copied().flatten()
    }

    pub fn is_compatible(&self, isoform: usize) -> bool {
        self.placement(isoform).is_some()
    }

    /// Isoforms able to produce this read.
    pub fn compatible_isoforms(&self) -> impl Iterator<Item = usize> + '_ {
        self.placements.iter().enumerate().filter_map(|(i, p)| p.map(|_| i))
    }

    /// Fragment length `l_{i,j}` imputed on `isoform`; the read length for
    /// single-end reads.
    pub fn fragment_length(&self, isoform: usize) -> Result<u32> {
        let p = self.placement(isoform).ok_or(Error::IncompatibleIsoform { isoform })?;
        Ok(match self.kind() {
            ReadKind::Single => self.read_length(),
            ReadKind::Paired => p.fragment_length(),
        })
    }

    fn without_boundary(mut self) -> Option<Self> {
        for p in &mut self.placements {
            if p.is_some_and(|p| p.boundary) {
                *p = None;
            }
        }
        self.placements.iter().any(Option::is_some).then_some(self)
    }
}

impl PartialEq for ReadType {
    fn eq(&self, other: &Self) -> bool {
        self.signature == other.signature
    }
}

impl Eq for ReadType {}

impl Hash for ReadType {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.signature.hash(state);
    }
}

impl PartialOrd for ReadType {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ReadType {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.signature.cmp(&other.signature)
    }
}

impl fmt::Display for ReadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.signature.fmt(f)
    }
}

/// Sequencing protocol used to enumerate read types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Protocol {
    Single {
        read_length: u32,
    },
    Paired {
        read_length: u32,
        /// Fragment lengths the library can contain.
        insert_support: BTreeSet<u32>,
    },
}

impl Protocol {
    pub fn read_length(&self) -> u32 {
        match self {
            Protocol::Single { read_length } | Protocol::Paired { read_length, .. } => *read_length,
        }
    }
}

/// Every distinct read type producible by any isoform, sorted by signature.
pub fn enumerate_read_types(gene: &GeneModel, protocol: &Protocol) -> Result<Vec<ReadType>> {
    enumerate_read_types_with(gene, protocol, false)
}

/// As [`enumerate_read_types`]; with `exclude_boundary`, placements whose
/// fragment touches an isoform end are dropped, and read types left without
/// any placement are omitted.
pub fn enumerate_read_types_with(
    gene: &GeneModel,
    protocol: &Protocol,
    exclude_boundary: bool,
) -> Result<Vec<ReadType>> {
    let r = protocol.read_length();
    if r == 0 {
        return Err(Error::InvalidProtocol("read length must be positive".into()));
    }
    if r > gene.min_isoform_length() {
        return Err(Error::InvalidProtocol(format!(
            "read length {r} exceeds the shortest isoform ({} bp)",
            gene.min_isoform_length()
        )));
    }
    let mut signatures = BTreeSet::new();
    match protocol {
        Protocol::Single { .. } => {
            for (i, iso) in gene.isoforms().iter().enumerate() {
                for start in 1..=iso.length - r + 1 {
                    signatures.insert(Signature::Single(gene.segments(i, start, r).expect("start within isoform")));
                }
            }
        }
        Protocol::Paired { insert_support, .. } => {
            if let Some(&short) = insert_support.iter().find(|&&l| l < r) {
                return Err(Error::InvalidProtocol(format!("insert length {short} is shorter than read length {r}")));
            }
            for (i, iso) in gene.isoforms().iter().enumerate() {
                for &frag in insert_support.range(..=iso.length) {
                    for start in 1..=iso.length - frag + 1 {
                        let end = start + frag - 1;
                        let m1 = gene.segments(i, start, r).expect("mate within isoform");
                        let m2 = gene.segments(i, end + 1 - r, r).expect("mate within isoform");
                        signatures.insert(Signature::Paired(m1, m2));
                    }
                }
            }
        }
    }
    Ok(signatures
        .into_iter()
        .filter_map(|sig| ReadType::from_signature(gene, sig))
        .filter_map(|rt| if exclude_boundary { rt.without_boundary() } else { Some(rt) })
        .collect())
}

/// Observed counts `n_j` per read type together with the experiment-wide
/// read total `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsVector {
    counts: BTreeMap<ReadType, u64>,
    total: u64,
}

impl CountsVector {
    pub fn new(counts: BTreeMap<ReadType, u64>, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidArgument("read total must be positive".into()));
        }
        let sum: u64 = counts.values().sum();
        if sum > total {
            return Err(Error::InvalidArgument(format!("gene-local counts ({sum}) exceed the read total ({total})")));
        }
        Ok(CountsVector { counts, total })
    }

    /// Counts with the read total set to their own sum.
    pub fn from_reads(reads: impl IntoIterator<Item = ReadType>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for rt in reads {
            *counts.entry(rt).or_insert(0) += 1;
        }
        let total = counts.values().sum();
        Self::new(counts, total)
    }

    pub fn get(&self, read: &ReadType) -> u64 {
        self.counts.get(read).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReadType, u64)> {
        self.counts.iter().map(|(r, &c)| (r, c))
    }

    pub fn read_types(&self) -> impl Iterator<Item = &ReadType> {
        self.counts.keys()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The experiment-wide read total `n`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Sum of the gene-local counts.
    pub fn mapped(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Probability that a uniformly placed read from the inclusion isoform
/// overlaps an alternatively spliced exon of length `exon_len`, in a gene of
/// total length `gene_len` sequenced with reads of length `read_len`.
pub fn isoform_informative_fraction(gene_len: u32, exon_len: u32, read_len: u32) -> Result<f64> {
    if read_len == 0 || read_len >= gene_len {
        return Err(Error::InvalidArgument(format!("read length {read_len} must lie in (0, {gene_len})")));
    }
    if exon_len == 0 {
        return Err(Error::InvalidArgument("exon length must be positive".into()));
    }
    Ok(f64::from(exon_len + read_len) / f64::from(gene_len - read_len))
}
