use crate::ir::{Access, AccessKind};

/// A contiguous run of elements in one space, requested at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Burst {
    pub space: usize,
    pub addr: u32,
    pub len: u32,
    pub kind: AccessKind,
}

/// Folds maximal runs of consecutive same-kind, same-space addresses into
/// bursts of at most `burst_max` elements.
pub fn coalesce(trace: &[Access], burst_max: u32) -> Vec<Burst> {
    let burst_max = burst_max.max(1);
    let mut out: Vec<Burst> = Vec::new();
    for a in trace {
        if let Some(last) = out.last_mut() {
            if last.space == a.space
                && last.kind == a.kind
                && last.len < burst_max
                && last.addr.checked_add(last.len) == Some(a.addr)
            {
                last.len += 1;
                continue;
            }
        }
        out.push(Burst {
            space: a.space,
            addr: a.addr,
            len: 1,
            kind: a.kind,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reads(addrs: impl IntoIterator<Item = u32>) -> Vec<Access> {
        addrs
            .into_iter()
            .map(|addr| Access {
                space: 0,
                addr,
                kind: AccessKind::Read,
            })
            .collect()
    }

    #[test]
    fn sixteen_sequential_reads_make_two_bursts_of_eight() {
        let b = coalesce(&reads(0..16), 8);
        assert_eq!(
            b.iter().map(|b| (b.addr, b.len)).collect::<Vec<_>>(),
            vec![(0, 8), (8, 8)]
        );
    }

    #[test]
    fn strided_reads_do_not_merge() {
        assert_eq!(coalesce(&reads([0, 2, 4]), 8).len(), 3);
    }

    #[test]
    fn kind_and_space_break_runs() {
        let mut t = reads([0, 1]);
        t.push(Access {
            space: 0,
            addr: 2,
            kind: AccessKind::Write,
        });
        t.push(Access {
            space: 1,
            addr: 3,
            kind: AccessKind::Write,
        });
        assert_eq!(coalesce(&t, 16).len(), 3);
    }
}
