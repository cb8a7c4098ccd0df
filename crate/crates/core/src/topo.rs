//! Hardware thread topology and thread pinning.
//!
//! A [`Topology`] lists the outermost shared caches ("cache groups"), the
//! hardware threads attached to each and the SMT sibling sets. It is read from
//! the Linux sysfs cpu hierarchy, or from a manual description file when the
//! `WAVEFRONT_TOPOLOGY_FILE` environment variable points at one.
//!
//! Manual file format: whitespace separated, `#` starts a comment, one line
//! per hardware thread:
//!
//! ```text
//! # hw_thread  core  cache_group  cache_bytes  [level]
//! 0            0     0            12582912     3
//! 6            0     0            12582912     3
//! ```
//!
//! The optional fifth column is the cache level (default 3).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming a manual topology file. When set it takes
/// precedence over OS introspection.
pub const TOPOLOGY_FILE_ENV: &str = "WAVEFRONT_TOPOLOGY_FILE";

const SYSFS_CPU_ROOT: &str = "/sys/devices/system/cpu";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologySource {
    OsIntrospection,
    ManualFile(PathBuf),
    /// Nothing usable was found; one group holds every thread.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HwThread {
    pub id: usize,
    pub core: usize,
    pub cache_group: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGroup {
    pub id: usize,
    pub level: u8,
    /// `None` when the size is unknown (fallback topology).
    pub size_bytes: Option<u64>,
    pub threads: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub threads: Vec<HwThread>,
    pub cache_groups: Vec<CacheGroup>,
    /// Hardware threads grouped by physical core, sorted by core id.
    pub smt_siblings: Vec<Vec<usize>>,
    pub physical_cores: usize,
    pub source: TopologySource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

struct ThreadRecord {
    id: usize,
    core: usize,
    group_key: String,
    level: u8,
    size: Option<u64>,
}

impl Topology {
    fn from_records(records: Vec<ThreadRecord>, source: TopologySource) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Config("topology has no hardware threads".into()));
        }
        let mut ids = BTreeSet::new();
        for r in &records {
            if !ids.insert(r.id) {
                return Err(Error::Config(format!("hardware thread {} listed twice", r.id)));
            }
        }
        let mut group_ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut groups: Vec<CacheGroup> = Vec::new();
        let mut sorted: Vec<&ThreadRecord> = records.iter().collect();
        sorted.sort_by_key(|r| r.id);
        let mut threads = Vec::with_capacity(sorted.len());
        for r in &sorted {
            let gid = match group_ids.get(r.group_key.as_str()) {
                Some(&g) => g,
                None => {
                    let g = groups.len();
                    group_ids.insert(&r.group_key, g);
                    groups.push(CacheGroup {
                        id: g,
                        level: r.level,
                        size_bytes: r.size,
                        threads: Vec::new(),
                    });
                    g
                }
            };
            let group = &mut groups[gid];
            if group.size_bytes != r.size || group.level != r.level {
                return Err(Error::Config(format!(
                    "cache group '{}' has inconsistent size or level",
                    r.group_key
                )));
            }
            if matches!(r.size, Some(0)) {
                return Err(Error::Config(format!("cache group '{}' has zero size", r.group_key)));
            }
            group.threads.push(r.id);
            threads.push(HwThread {
                id: r.id,
                core: r.core,
                cache_group: gid,
            });
        }
        let mut cores: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for t in &threads {
            cores.entry(t.core).or_default().push(t.id);
        }
        for siblings in cores.values() {
            let g = threads.iter().find(|t| t.id == siblings[0]).unwrap().cache_group;
            if siblings
                .iter()
                .any(|s| threads.iter().find(|t| t.id == *s).unwrap().cache_group != g)
            {
                return Err(Error::Config("SMT siblings span cache groups".into()));
            }
        }
        Ok(Topology {
            physical_cores: cores.len(),
            smt_siblings: cores.into_values().collect(),
            threads,
            cache_groups: groups,
            source,
            warnings: Vec::new(),
        })
    }

    /// Single group with `n` threads, one per core, cache size unknown.
    pub fn fallback(n: usize) -> Self {
        let n = n.max(1);
        let records = (0..n)
            .map(|id| ThreadRecord {
                id,
                core: id,
                group_key: "all".into(),
                level: 0,
                size: None,
            })
            .collect();
        let mut t = Self::from_records(records, TopologySource::Fallback).expect("n >= 1");
        t.warnings
            .push("no topology information available; assuming one shared cache group".into());
        t
    }

    pub fn contains(&self, hw_thread: usize) -> bool {
        self.threads.iter().any(|t| t.id == hw_thread)
    }

    pub fn hw_threads(&self) -> usize {
        self.threads.len()
    }

    pub fn smt_per_core(&self) -> usize {
        self.smt_siblings.iter().map(Vec::len).max().unwrap_or(1)
    }

    /// Smallest outermost-cache size over all groups, if known.
    pub fn outer_cache_bytes(&self) -> Option<u64> {
        self.cache_groups.iter().map(|g| g.size_bytes).min().flatten()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One-line description used in measurement fingerprints.
    pub fn summary(&self) -> String {
        let cache = self
            .outer_cache_bytes()
            .map(|b| format!("{} KiB", b / 1024))
            .unwrap_or_else(|| "unknown".into());
        format!(
            "{} hw threads, {} cores, {} cache groups (outer {}), source {:?}",
            self.hw_threads(),
            self.physical_cores,
            self.cache_groups.len(),
            cache,
            self.source
        )
    }
}

/// Parses a manual topology description.
pub fn parse_topology_file(text: &str, origin: &Path) -> Result<Topology> {
    let mut records = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(4..=5).contains(&fields.len()) {
            return Err(err(format!("expected 4 or 5 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|e| err(format!("'{s}': {e}")));
        let level = match fields.get(4) {
            Some(s) => u8::try_from(num(s)?).map_err(|e| err(e.to_string()))?,
            None => 3,
        };
        let size = num(fields[3])?;
        if size == 0 {
            return Err(err("cache size must be positive".into()));
        }
        records.push(ThreadRecord {
            id: num(fields[0])? as usize,
            core: num(fields[1])? as usize,
            group_key: fields[2].to_string(),
            level,
            size: Some(size),
        });
    }
    Topology::from_records(records, TopologySource::ManualFile(origin.to_path_buf()))
}

/// Parses a cpu list such as `0-3,8,10-11`.
pub fn parse_cpu_list(s: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.trim().split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
                if a > b {
                    return None;
                }
                out.extend(a..=b);
            }
            None => out.push(part.trim().parse().ok()?),
        }
    }
    Some(out)
}

/// Parses sysfs cache sizes such as `32K`, `12M` or `512`.
fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let (digits, mult) = match s.chars().last()? {
        'K' | 'k' => (&s[..s.len() - 1], 1024),
        'M' | 'm' => (&s[..s.len() - 1], 1024 * 1024),
        'G' | 'g' => (&s[..s.len() - 1], 1024 * 1024 * 1024),
        _ => (s, 1),
    };
    digits.parse::<u64>().ok().map(|v| v * mult)
}

/// Reads the Linux cpu hierarchy below `root` (normally `/sys/devices/system/cpu`).
pub fn detect_from_sysfs(root: &Path) -> Result<Topology> {
    let read = |p: PathBuf| std::fs::read_to_string(&p).map(|s| s.trim().to_string());
    let online = read(root.join("online"))?;
    let cpus = parse_cpu_list(&online)
        .ok_or_else(|| Error::Config(format!("cannot parse online cpu list '{online}'")))?;
    let mut records = Vec::new();
    for cpu in cpus {
        let base = root.join(format!("cpu{cpu}"));
        let core_id: usize = read(base.join("topology/core_id"))?
            .parse()
            .map_err(|_| Error::Config(format!("bad core_id for cpu{cpu}")))?;
        let package: usize = read(base.join("topology/physical_package_id"))
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        // Outermost data or unified cache.
        let mut best: Option<(u8, u64, String)> = None;
        if let Ok(entries) = std::fs::read_dir(base.join("cache")) {
            for entry in entries.flatten() {
                let name = entry.file_name();
                if !name.to_string_lossy().starts_with("index") {
                    continue;
                }
                let dir = entry.path();
                let kind = read(dir.join("type")).unwrap_or_default();
                if kind == "Instruction" {
                    continue;
                }
                let (Some(level), Some(size), Ok(shared)) = (
                    read(dir.join("level")).ok().and_then(|s| s.parse::<u8>().ok()),
                    read(dir.join("size")).ok().and_then(|s| parse_size(&s)),
                    read(dir.join("shared_cpu_list")),
                ) else {
                    continue;
                };
                if best.as_ref().is_none_or(|(l, _, _)| level > *l) {
                    best = Some((level, size, shared));
                }
            }
        }
        let (level, size, shared) =
            best.ok_or_else(|| Error::Config(format!("no cache information for cpu{cpu}")))?;
        records.push(ThreadRecord {
            id: cpu,
            // Core ids repeat across packages; keep them unique.
            core: package * 1_000_000 + core_id,
            group_key: format!("L{level}:{shared}"),
            level,
            size: Some(size),
        });
    }
    Topology::from_records(records, TopologySource::OsIntrospection)
}

/// Topology from the manual file if forced, else from sysfs, else the fallback.
/// Degraded sources are logged and recorded in `warnings`.
pub fn detect_topology() -> Topology {
    let forced = std::env::var_os(TOPOLOGY_FILE_ENV).map(PathBuf::from);
    detect_with(forced.as_deref(), Path::new(SYSFS_CPU_ROOT))
}

pub fn detect_with(file: Option<&Path>, sysfs_root: &Path) -> Topology {
    let mut warnings = Vec::new();
    if let Some(path) = file {
        match std::fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|text| parse_topology_file(&text, path))
        {
            Ok(t) => return t,
            Err(e) => warnings.push(format!("topology file {}: {e}", path.display())),
        }
    }
    match detect_from_sysfs(sysfs_root) {
        Ok(mut t) => {
            t.warnings.extend(warnings);
            t
        }
        Err(e) => {
            warnings.push(format!("sysfs topology unavailable: {e}"));
            let n = std::thread::available_parallelism().map_or(1, |n| n.get());
            let mut t = Topology::fallback(n);
            t.warnings.splice(0..0, warnings);
            for w in &t.warnings {
                log::warn!("{w}");
            }
            t
        }
    }
}

/// Whether hyperthread siblings are used for consecutive wavefront ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmtMode {
    Off,
    On,
}

/// Hardware threads for `groups × per_group` workers, in rank order
/// `(group 0: rank 0..t), (group 1: ...)`.
///
/// Every thread group lands inside one cache group. With SMT on, the slots of a
/// cache group are ordered core by core with siblings adjacent, so consecutive
/// wavefront ranks share a core; with SMT off only the first sibling of each
/// core is used.
pub fn plan_placement(
    topo: &Topology,
    groups: usize,
    per_group: usize,
    smt: SmtMode,
) -> Result<Vec<usize>> {
    if groups == 0 || per_group == 0 {
        return Err(Error::Placement("empty team".into()));
    }
    let capacity = match smt {
        SmtMode::On => topo.hw_threads(),
        SmtMode::Off => topo.physical_cores,
    };
    if groups * per_group > capacity {
        return Err(Error::Placement(format!(
            "{groups}x{per_group} threads exceed {capacity} available {}",
            if smt == SmtMode::On { "hardware threads" } else { "physical cores" }
        )));
    }
    let mut placement = Vec::with_capacity(groups * per_group);
    let mut placed = 0;
    for group in &topo.cache_groups {
        let mut slots = Vec::new();
        for siblings in &topo.smt_siblings {
            let members: Vec<usize> = siblings
                .iter()
                .copied()
                .filter(|id| group.threads.contains(id))
                .collect();
            match smt {
                SmtMode::On => slots.extend(members),
                SmtMode::Off => slots.extend(members.first()),
            }
        }
        for chunk in slots.chunks_exact(per_group) {
            if placed == groups {
                break;
            }
            placement.extend_from_slice(chunk);
            placed += 1;
        }
    }
    if placed < groups {
        return Err(Error::Placement(format!(
            "only {placed} of {groups} thread groups of {per_group} fit inside a single cache group"
        )));
    }
    Ok(placement)
}

/// Restricts the calling thread to exactly `hw_thread`.
#[cfg(target_os = "linux")]
pub fn pin_current_thread(hw_thread: usize) -> Result<()> {
    let fail = |reason: String| Error::Pinning { hw_thread, reason };
    if hw_thread >= libc::CPU_SETSIZE as usize {
        return Err(fail("id exceeds CPU_SETSIZE".into()));
    }
    // SAFETY: cpu_set_t is plain data; CPU_SET stays in bounds (checked above).
    let rc = unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(hw_thread, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set)
    };
    if rc != 0 {
        return Err(fail(std::io::Error::last_os_error().to_string()));
    }
    Ok(())
}

#[cfg(not(target_os = "linux"))]
pub fn pin_current_thread(hw_thread: usize) -> Result<()> {
    Err(Error::Pinning {
        hw_thread,
        reason: "thread affinity is not supported on this platform".into(),
    })
}

/// Hardware threads the calling thread may run on.
#[cfg(target_os = "linux")]
pub fn current_affinity() -> Result<Vec<usize>> {
    // SAFETY: plain-data cpu_set_t filled by the kernel.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return Err(std::io::Error::last_os_error().into());
        }
        Ok((0..libc::CPU_SETSIZE as usize)
            .filter(|&c| libc::CPU_ISSET(c, &set))
            .collect())
    }
}

#[cfg(not(target_os = "linux"))]
pub fn current_affinity() -> Result<Vec<usize>> {
    Err(Error::Config("affinity query unsupported on this platform".into()))
}
