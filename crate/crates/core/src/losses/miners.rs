/// Exhaustive pairs of a batch; each unordered pair appears once as `(i, j)`, `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pub positive: Vec<(usize, usize)>,
    pub negative: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

pub fn mine_pairs<L: PartialEq>(labels: &[L]) -> PairSet {
    let mut set = PairSet::default();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                set.positive.push((i, j));
            } else {
                set.negative.push((i, j));
            }
        }
    }
    set
}

/// Every ordered positive pair `(a, p)`, `a ≠ p`, combined with every negative of `a`.
pub fn mine_triplets<L: PartialEq>(labels: &[L]) -> Vec<Triplet> {
    let mut out = Vec::new();
    for a in 0..labels.len() {
        for p in 0..labels.len() {
            if p == a || labels[a] != labels[p] {
                continue;
            }
            for (n, ln) in labels.iter().enumerate() {
                if *ln != labels[a] {
                    out.push(Triplet {
                        anchor: a,
                        positive: p,
                        negative: n,
                    });
                }
            }
        }
    }
    out
}
