//! Ingest of MAT v7.3 (HDF5-layout) tumor records, manifest construction
//! and deterministic train/validation/test splitting.
//!
//! Each record file holds a group `cjdata` with `label` (scalar code 1..3),
//! `PID` (uint16 char codes), `image` (HxW int16), `tumorBorder` (flat
//! (row, col) pairs) and `tumorMask` (HxW uint8).

use crate::error::IngestError;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use tumorbench_nn::rng as nnrng;

/// The three tumor classes, ordered by their dataset codes 1..3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TumorClass {
    Meningioma,
    Glioma,
    Pituitary,
}

impl TumorClass {
    pub const ALL: [TumorClass; 3] = [TumorClass::Meningioma, TumorClass::Glioma, TumorClass::Pituitary];

    /// Decode the dataset's 1-based label code.
    pub fn from_dataset_code(code: i64) -> Result<Self, IngestError> {
        match code {
            1 => Ok(TumorClass::Meningioma),
            2 => Ok(TumorClass::Glioma),
            3 => Ok(TumorClass::Pituitary),
            other => Err(IngestError::InvalidLabel(other)),
        }
    }

    pub fn dataset_code(self) -> i64 {
        self.index() as i64 + 1
    }

    /// Zero-based class index used everywhere internally.
    pub fn index(self) -> usize {
        match self {
            TumorClass::Meningioma => 0,
            TumorClass::Glioma => 1,
            TumorClass::Pituitary => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TumorClass::Meningioma => "meningioma",
            TumorClass::Glioma => "glioma",
            TumorClass::Pituitary => "pituitary",
        }
    }

    /// Class names in index order, for metric reports.
    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

/// One MRI slice record.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorRecord {
    pub label: TumorClass,
    pub pid: String,
    pub image: Array2<i16>,
    /// Flat (row, col) pairs tracing the tumor boundary, pixel units.
    pub tumor_border: Vec<f64>,
    pub tumor_mask: Array2<u8>,
}

impl TumorRecord {
    /// Enforce the structural invariants shared by parse and cache paths.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.image.dim() != self.tumor_mask.dim() {
            return Err(IngestError::ShapeMismatch {
                image: vec![self.image.nrows(), self.image.ncols()],
                mask: vec![self.tumor_mask.nrows(), self.tumor_mask.ncols()],
            });
        }
        if self.tumor_border.len() % 2 != 0 {
            return Err(IngestError::OddBorderLength(self.tumor_border.len()));
        }
        let (h, w) = self.image.dim();
        for pair in self.tumor_border.chunks_exact(2) {
            let (row, col) = (pair[0], pair[1]);
            if !(0.0..=(h as f64)).contains(&row) || !(0.0..=(w as f64)).contains(&col) {
                return Err(IngestError::BorderOutOfBounds { row, col, h, w });
            }
        }
        if !self.tumor_mask.iter().all(|&v| v <= 1) || !self.tumor_mask.iter().any(|&v| v == 1) {
            return Err(IngestError::InvalidMask);
        }
        Ok(())
    }
}

fn read_scalar_label(group: &hdf5::Group) -> Result<i64, IngestError> {
    let ds = group.dataset("label").map_err(|_| IngestError::MissingField("label".into()))?;
    let v: f64 = if ds.ndim() == 0 {
        ds.read_scalar()?
    } else {
        *ds.read_raw::<f64>()?.first().ok_or_else(|| IngestError::MissingField("label".into()))?
    };
    Ok(v as i64)
}

fn read_pid(group: &hdf5::Group) -> Result<String, IngestError> {
    let ds = group.dataset("PID").map_err(|_| IngestError::MissingField("PID".into()))?;
    let codes: Vec<u16> = ds.read_raw()?;
    Ok(codes.iter().filter_map(|&c| char::from_u32(c as u32)).collect())
}

fn read_2d<T: hdf5::H5Type + Clone>(group: &hdf5::Group, name: &str) -> Result<Array2<T>, IngestError> {
    let ds = group.dataset(name).map_err(|_| IngestError::MissingField(name.into()))?;
    Ok(ds.read_2d()?)
}

/// Parse one MAT v7.3 record file.
pub fn parse_record(path: &Path) -> Result<TumorRecord, IngestError> {
    let file = hdf5::File::open(path)?;
    let group = file.group("cjdata").map_err(|_| IngestError::MissingField("cjdata".into()))?;
    let code = read_scalar_label(&group)?;
    let label = TumorClass::from_dataset_code(code)?;
    let pid = read_pid(&group)?;
    let image: Array2<i16> = read_2d(&group, "image")?;
    let border_ds = group
        .dataset("tumorBorder")
        .map_err(|_| IngestError::MissingField("tumorBorder".into()))?;
    let tumor_border: Vec<f64> = border_ds.read_raw()?;
    let tumor_mask: Array2<u8> = read_2d(&group, "tumorMask")?;
    let record = TumorRecord { label, pid, image, tumor_border, tumor_mask };
    record.validate()?;
    Ok(record)
}

/// Write a record in the same cjdata layout (test fixtures, cache export).
pub fn write_record(path: &Path, record: &TumorRecord) -> Result<(), IngestError> {
    let file = hdf5::File::create(path)?;
    let group = file.create_group("cjdata")?;
    group
        .new_dataset_builder()
        .with_data(&ndarray::arr2(&[[record.label.dataset_code() as f64]]))
        .create("label")?;
    let pid_codes: Vec<u16> = record.pid.chars().map(|c| c as u16).collect();
    group.new_dataset_builder().with_data(&pid_codes).create("PID")?;
    group.new_dataset_builder().with_data(&record.image).create("image")?;
    group.new_dataset_builder().with_data(&record.tumor_border).create("tumorBorder")?;
    group.new_dataset_builder().with_data(&record.tumor_mask).create("tumorMask")?;
    Ok(())
}

/// Fraction of mask pixels covered by the scanline fill of the border
/// polygon. Used as a parse-time integrity probe (the dataset's border was
/// hand-traced, so a healthy record overlaps well above 0.8).
pub fn border_mask_overlap(record: &TumorRecord) -> f64 {
    let (h, w) = (record.tumor_mask.nrows(), record.tumor_mask.ncols());
    let fill = rasterize_polygon(&record.tumor_border, h, w);
    let mask_total: u64 = record.tumor_mask.iter().map(|&v| v as u64).sum();
    if mask_total == 0 {
        return 0.0;
    }
    let mut hit = 0u64;
    for r in 0..h {
        for c in 0..w {
            if record.tumor_mask[[r, c]] == 1 && fill[[r, c]] == 1 {
                hit += 1;
            }
        }
    }
    hit as f64 / mask_total as f64
}

/// Even-odd scanline rasterization of a closed (row, col) polygon onto an
/// HxW grid; a pixel is inside when its center is.
pub fn rasterize_polygon(border: &[f64], h: usize, w: usize) -> Array2<u8> {
    let mut out = Array2::<u8>::zeros((h, w));
    let pts: Vec<(f64, f64)> = border.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    if pts.len() < 3 {
        return out;
    }
    let n = pts.len();
    for r in 0..h {
        let y = r as f64;
        let mut xs: Vec<f64> = Vec::new();
        for i in 0..n {
            let (y1, x1) = pts[i];
            let (y2, x2) = pts[(i + 1) % n];
            // half-open rule so vertices are counted once
            if (y1 <= y && y < y2) || (y2 <= y && y < y1) {
                xs.push(x1 + (y - y1) / (y2 - y1) * (x2 - x1));
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in xs.chunks_exact(2) {
            let start = pair[0].ceil().max(0.0) as usize;
            let end = pair[1].floor().min(w as f64 - 1.0);
            if end < 0.0 {
                continue;
            }
            for c in start..=(end as usize) {
                out[[r, c]] = 1;
            }
        }
    }
    out
}

/// Ordered collection of records with class tallies.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    records: Vec<TumorRecord>,
    filenames: Vec<String>,
    class_counts: BTreeMap<TumorClass, usize>,
}

impl DatasetManifest {
    pub fn from_records(records: Vec<TumorRecord>, filenames: Vec<String>) -> Self {
        let mut class_counts = BTreeMap::new();
        for r in &records {
            *class_counts.entry(r.label).or_insert(0) += 1;
        }
        DatasetManifest { records, filenames, class_counts }
    }

    pub fn total(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[TumorRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &TumorRecord {
        &self.records[index]
    }

    pub fn filenames(&self) -> &[String] {
        &self.filenames
    }

    pub fn class_count(&self, class: TumorClass) -> usize {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    pub fn class_counts(&self) -> &BTreeMap<TumorClass, usize> {
        &self.class_counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label.index()).collect()
    }
}

/// Load every `.mat` record under `dir`, in stable filename-sorted order.
pub fn load_dataset(dir: &Path) -> Result<DatasetManifest, IngestError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "mat").unwrap_or(false))
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if paths.is_empty() {
        return Err(IngestError::EmptyDataset(dir.to_path_buf()));
    }
    let mut records = Vec::with_capacity(paths.len());
    let mut filenames = Vec::with_capacity(paths.len());
    for p in &paths {
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let record = parse_record(p).map_err(|e| IngestError::Record { file: name.clone(), source: Box::new(e) })?;
        records.push(record);
        filenames.push(name);
    }
    Ok(DatasetManifest::from_records(records, filenames))
}

/// Persist a manifest as one HDF5 container, one cjdata-style group per
/// record, preserving all fields bit-exactly.
pub fn write_manifest_cache(manifest: &DatasetManifest, path: &Path) -> Result<(), IngestError> {
    let file = hdf5::File::create(path)?;
    let records = file.create_group("records")?;
    for (i, r) in manifest.records().iter().enumerate() {
        let g = records.create_group(&format!("{i:05}"))?;
        g.new_dataset_builder()
            .with_data(&ndarray::arr2(&[[r.label.dataset_code() as f64]]))
            .create("label")?;
        let pid_codes: Vec<u16> = r.pid.chars().map(|c| c as u16).collect();
        g.new_dataset_builder().with_data(&pid_codes).create("PID")?;
        g.new_dataset_builder().with_data(&r.image).create("image")?;
        g.new_dataset_builder().with_data(&r.tumor_border).create("tumorBorder")?;
        g.new_dataset_builder().with_data(&r.tumor_mask).create("tumorMask")?;
    }
    let names: Vec<hdf5::types::VarLenUnicode> = manifest
        .filenames()
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    file.new_dataset_builder().with_data(&names).create("filenames")?;
    Ok(())
}

/// Read a manifest cache written by [`write_manifest_cache`].
pub fn read_manifest_cache(path: &Path) -> Result<DatasetManifest, IngestError> {
    let file = hdf5::File::open(path)?;
    let records_group = file.group("records")?;
    let mut names: Vec<String> = records_group.member_names()?;
    names.sort();
    let mut records = Vec::with_capacity(names.len());
    for n in &names {
        let g = records_group.group(n)?;
        let code = read_scalar_label(&g)?;
        let record = TumorRecord {
            label: TumorClass::from_dataset_code(code)?,
            pid: read_pid(&g)?,
            image: read_2d(&g, "image")?,
            tumor_border: g.dataset("tumorBorder")?.read_raw()?,
            tumor_mask: read_2d(&g, "tumorMask")?,
        };
        record.validate()?;
        records.push(record);
    }
    let filenames: Vec<String> = file
        .dataset("filenames")?
        .read_raw::<hdf5::types::VarLenUnicode>()?
        .iter()
        .map(|s| s.to_string())
        .collect();
    Ok(DatasetManifest::from_records(records, filenames))
}

/// Split prescription: fractions (or explicit counts), seed, shuffle buffer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
    #[serde(default = "default_shuffle_buffer")]
    pub shuffle_buffer: usize,
    #[serde(default)]
    pub exact_counts: Option<(usize, usize, usize)>,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub group_by_patient: bool,
}

fn default_shuffle_buffer() -> usize {
    1000
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            seed: 0,
            shuffle_buffer: 1000,
            exact_counts: None,
            stratified: false,
            group_by_patient: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self, total: usize) -> Result<(), IngestError> {
        if let Some((tr, va, te)) = self.exact_counts {
            if tr + va + te != total {
                return Err(IngestError::CountOverflow { got: tr + va + te, total });
            }
            return Ok(());
        }
        for (name, f) in [("train_frac", self.train_frac), ("val_frac", self.val_frac), ("test_frac", self.test_frac)] {
            if !(0.0..=1.0).contains(&f) || !f.is_finite() {
                return Err(IngestError::InvalidSpec(format!("{name} = {f} outside [0, 1]")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(IngestError::InvalidSpec(format!("fractions sum to {sum}, expected 1")));
        }
        if self.shuffle_buffer == 0 {
            return Err(IngestError::InvalidSpec("shuffle_buffer must be >= 1".into()));
        }
        Ok(())
    }

    /// (train, val, test) sizes under the floor rule, or the explicit counts.
    pub fn sizes(&self, total: usize) -> (usize, usize, usize) {
        if let Some(c) = self.exact_counts {
            return c;
        }
        let train = (self.train_frac * total as f64).floor() as usize;
        let val = (self.val_frac * total as f64).floor() as usize;
        (train, val, total - train - val)
    }
}

/// Disjoint, exhaustive index lists into a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Serialized form of a split file: the indices plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub spec: SplitSpec,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn to_file(&self, spec: &SplitSpec) -> SplitFile {
        SplitFile {
            seed: spec.seed,
            spec: spec.clone(),
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
        }
    }

    pub fn save(&self, spec: &SplitSpec, path: &Path) -> Result<(), IngestError> {
        let json = serde_json::to_string_pretty(&self.to_file(spec))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, SplitSpec), IngestError> {
        let file: SplitFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((DatasetSplit { train: file.train, val: file.val, test: file.test }, file.spec))
    }
}

/// Streaming shuffle with a bounded buffer (the conventional reading of a
/// shuffle-buffer parameter): fill a buffer, repeatedly emit a uniformly
/// chosen slot and refill from the remaining stream.
pub fn buffered_shuffle<R: Rng>(n: usize, buffer: usize, rng: &mut R) -> Vec<usize> {
    let cap = buffer.max(1).min(n);
    let mut buf: Vec<usize> = (0..cap).collect();
    let mut next = cap;
    let mut out = Vec::with_capacity(n);
    while !buf.is_empty() {
        let j = rng.gen_range(0..buf.len());
        out.push(buf[j]);
        if next < n {
            buf[j] = next;
            next += 1;
        } else {
            buf.swap_remove(j);
        }
    }
    out
}

/// Deterministic split of the manifest under `spec`.
pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetSplit, IngestError> {
    let total = manifest.total();
    spec.validate(total)?;
    let mut rng = nnrng::stream(nnrng::mix_tag(spec.seed, "dataset-split"));
    let order: Vec<usize> = if spec.group_by_patient {
        // keep all slices of a patient in one partition: shuffle patient
        // groups, then flatten
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in manifest.records().iter().enumerate() {
            groups.entry(r.pid.as_str()).or_default().push(i);
        }
        let keys: Vec<&str> = groups.keys().copied().collect();
        let perm = buffered_shuffle(keys.len(), spec.shuffle_buffer, &mut rng);
        perm.into_iter().flat_map(|gi| groups[keys[gi]].clone()).collect()
    } else if spec.stratified {
        // per-class shuffles, then proportional round-robin interleave so
        // each prefix holds roughly the global class mixture
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); TumorClass::ALL.len()];
        for (i, r) in manifest.records().iter().enumerate() {
            per_class[r.label.index()].push(i);
        }
        for (c, list) in per_class.iter_mut().enumerate() {
            let mut crng = nnrng::stream(nnrng::mix_tag(spec.seed, &format!("dataset-split-class-{c}")));
            let perm = buffered_shuffle(list.len(), spec.shuffle_buffer, &mut crng);
            *list = perm.into_iter().map(|j| list[j]).collect();
        }
        interleave_proportional(&per_class, total)
    } else {
        buffered_shuffle(total, spec.shuffle_buffer, &mut rng)
    };

    let (ntr, nva, _) = spec.sizes(total);
    Ok(DatasetSplit {
        train: order[..ntr].to_vec(),
        val: order[ntr..ntr + nva].to_vec(),
        test: order[ntr + nva..].to_vec(),
    })
}

fn interleave_proportional(per_class: &[Vec<usize>], total: usize) -> Vec<usize> {
    let mut cursors = vec![0usize; per_class.len()];
    let mut out = Vec::with_capacity(total);
    // largest-remainder style: at each step take from the class whose
    // emitted share lags its overall share the most
    while out.len() < total {
        let mut best = None;
        let mut best_lag = f64::NEG_INFINITY;
        for (c, list) in per_class.iter().enumerate() {
            if cursors[c] >= list.len() {
                continue;
            }
            let share = list.len() as f64 / total as f64;
            let lag = share * (out.len() + 1) as f64 - cursors[c] as f64;
            if lag > best_lag {
                best_lag = lag;
                best = Some(c);
            }
        }
        let c = best.expect("classes exhausted early");
        out.push(per_class[c][cursors[c]]);
        cursors[c] += 1;
    }
    out
}
