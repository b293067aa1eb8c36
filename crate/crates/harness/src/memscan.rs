//! Searches a live process's readable memory for byte patterns (Linux).

use std::fs::File;
use std::io;
use std::os::unix::fs::FileExt;

use memchr::memmem::Finder;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub start: u64,
    pub end: u64,
    pub perms: String,
    pub path: String,
}

pub fn regions(pid: u32) -> io::Result<Vec<Region>> {
    let maps = std::fs::read_to_string(format!("/proc/{pid}/maps"))?;
    Ok(maps.lines().filter_map(parse_maps_line).collect())
}

fn parse_maps_line(line: &str) -> Option<Region> {
    let mut it = line.split_whitespace();
    let (lo, hi) = it.next()?.split_once('-')?;
    let perms = it.next()?.to_string();
    let path = it.nth(3).unwrap_or("").to_string();
    Some(Region {
        start: u64::from_str_radix(lo, 16).ok()?,
        end: u64::from_str_radix(hi, 16).ok()?,
        perms,
        path,
    })
}

/// Offsets of every occurrence of every pattern in `hay`, as `(pattern, offset)`.
pub fn scan_bytes(hay: &[u8], patterns: &[Vec<u8>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, p) in patterns.iter().enumerate() {
        out.extend(Finder::new(p).find_iter(hay).map(|o| (i, o)));
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct ScanReport {
    /// `(pattern index, address)` of each hit.
    pub hits: Vec<(usize, u64)>,
    pub bytes_scanned: u64,
    pub regions_scanned: usize,
    pub regions_unreadable: usize,
}

const CHUNK: usize = 8 << 20;

/// Scans every readable mapping of `pid`. Chunks overlap by the longest
/// pattern so no occurrence is split.
pub fn scan_process(pid: u32, patterns: &[Vec<u8>]) -> io::Result<ScanReport> {
    let mem = File::open(format!("/proc/{pid}/mem"))?;
    let overlap = patterns.iter().map(Vec::len).max().unwrap_or(1).saturating_sub(1);
    let finders: Vec<Finder> = patterns.iter().map(Finder::new).collect();
    let mut report = ScanReport::default();
    let mut buf = vec![0u8; CHUNK + overlap];
    for r in regions(pid)? {
        if !r.perms.starts_with('r') || r.path == "[vvar]" || r.path == "[vsyscall]" {
            continue;
        }
        let mut addr = r.start;
        let mut ok = true;
        while addr < r.end {
            let want = ((r.end - addr) as usize).min(buf.len());
            let n = match mem.read_at(&mut buf[..want], addr) {
                Ok(n) if n > 0 => n,
                _ => {
                    ok = false;
                    break;
                }
            };
            for (i, f) in finders.iter().enumerate() {
                report.hits.extend(f.find_iter(&buf[..n]).map(|o| (i, addr + o as u64)));
            }
            report.bytes_scanned += n as u64;
            if n < want || addr + n as u64 >= r.end {
                break;
            }
            addr += (n - overlap.min(n - 1)) as u64;
        }
        if ok {
            report.regions_scanned += 1;
        } else {
            report.regions_unreadable += 1;
        }
    }
    report.hits.sort_unstable();
    report.hits.dedup();
    Ok(report)
}

/// Fixed-width windows at evenly spaced offsets; short inputs give one window.
pub fn windows(bytes: &[u8], width: usize, count: usize) -> Vec<Vec<u8>> {
    if bytes.len() <= width {
        return vec![bytes.to_vec()];
    }
    let span = bytes.len() - width;
    (0..count.max(1))
        .map(|i| {
            let at = if count <= 1 { 0 } else { span * i / (count - 1) };
            bytes[at..at + width].to_vec()
        })
        .collect()
}
