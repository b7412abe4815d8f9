mod common;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use flatlink::exec::ExecError;
use flatlink::flat_record::serialize_record;
use flatlink::link_join::{
    join2, join3, load_ground_truth, split_link_id, GroundTruthPair, GtFormat, Join2Job, Join3Job, JoinError,
};
use flatlink::rdf_ingest::Triple;
use flatlink::synth::{self, ground_truth, write_gt_ntriples, write_gt_tsv, KbGenerator, KbShape};
use rand::Rng;

use common::{cfg, group_oracle, join2_oracle, oracle_split_link, read_lines, write};

/// Writes an entity file straight from the oracle grouping (not via the
/// compiler) and returns its `(uri, line)` pairs.
fn entity_file(dir: &Path, label: &str, subjects: usize, seed: u64) -> (PathBuf, Vec<(String, String)>) {
    let triples: Vec<Triple> = KbGenerator::new(KbShape::new(label, subjects, subjects * 4), seed).collect();
    let rows: Vec<(String, String)> = group_oracle(&triples).into_iter().map(|(u, r)| (u, serialize_record(&r))).collect();
    let path = dir.join(format!("{label}.ents"));
    let body: String = rows.iter().map(|(_, l)| format!("{l}\n")).collect();
    std::fs::write(&path, body).unwrap();
    (path, rows)
}

fn job2(left: &Path, right: &Path, gt: &Path, labels: (&str, &str), out: &Path) -> Join2Job {
    Join2Job {
        left_entities: left.into(),
        right_entities: right.into(),
        ground_truth: gt.into(),
        gt_format: GtFormat::TsvPairs,
        left_label: labels.0.into(),
        right_label: labels.1.into(),
        output: out.into(),
    }
}

#[test]
fn single_pair_five_slot_line() {
    let d = tempfile::tempdir().unwrap();
    let a = write(d.path(), "fb.ents", "f1\tname\t\"\"F\"\"\n");
    let b = write(d.path(), "db.ents", "d1\tlabel\t\"\"D\"\"\n");
    let gt = write(d.path(), "gt.tsv", "f1\td1\n");
    let out = d.path().join("fd.links");
    let r = join2(&job2(&a, &b, &gt, ("freebase", "dbpedia"), &out), &cfg(d.path(), 2, 1 << 20)).unwrap();
    assert_eq!(r.lines_emitted, 1);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "fd-1\tfreebase-instance\tf1\tname\t\"\"F\"\"\tdbpedia-instance\td1\tlabel\t\"\"D\"\"\n"
    );

    let gt = write(d.path(), "gt2.tsv", "f1\tmissing\n");
    let r = join2(&job2(&a, &b, &gt, ("freebase", "dbpedia"), &out), &cfg(d.path(), 2, 1 << 20)).unwrap();
    assert_eq!((r.lines_emitted, r.pairs_dropped_right, r.pairs_dropped_left), (0, 1, 0));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn random_join2_matches_nested_loop_oracle() {
    for seed in 0..5u64 {
        let d = tempfile::tempdir().unwrap();
        let (a_path, a) = entity_file(d.path(), "freebase", 200, seed * 10 + 1);
        let (b_path, b) = entity_file(d.path(), "dbpedia", 200, seed * 10 + 2);
        let left: Vec<String> = a.iter().map(|(u, _)| u.clone()).collect();
        let right: Vec<String> = b.iter().map(|(u, _)| u.clone()).collect();
        let pairs = ground_truth(&mut synth::rng(seed), &left, &right, 300, 0.3);
        let gt = d.path().join("gt.tsv");
        write_gt_tsv(&gt, &pairs).unwrap();
        let out = d.path().join("fd.links");
        let r = join2(&job2(&a_path, &b_path, &gt, ("freebase", "dbpedia"), &out), &cfg(d.path(), 5, 32 << 10)).unwrap();

        let oracle = join2_oracle(&a, &b, &pairs);
        let want: Vec<String> = oracle
            .rows
            .iter()
            .enumerate()
            .map(|(i, (_, _, la, lb))| format!("fd-{}\tfreebase-instance\t{la}\tdbpedia-instance\t{lb}", i + 1))
            .collect();
        assert_eq!(read_lines(&out), want, "seed {seed}");
        assert_eq!(r.pairs_dropped_left, oracle.dropped_left);
        assert_eq!(r.pairs_dropped_right, oracle.dropped_right);
        assert_eq!(r.pairs_read, 300);
        assert_eq!(r.duplicate_pairs, 300 - pairs.iter().collect::<HashSet<_>>().len() as u64);

        // Same pairs as sameAs triples give the same file.
        let nt = d.path().join("gt.nt");
        write_gt_ntriples(&nt, &pairs).unwrap();
        let out2 = d.path().join("fd2.links");
        let mut job = job2(&a_path, &b_path, &nt, ("freebase", "dbpedia"), &out2);
        job.gt_format = GtFormat::ntriples();
        join2(&job, &cfg(d.path(), 3, 1 << 20)).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
    }
}

#[test]
fn ground_truth_dedup_matches_naive_set() {
    let d = tempfile::tempdir().unwrap();
    let mut rng = synth::rng(8);
    let uris: Vec<String> = (0..20).map(|i| format!("u{i}")).collect();
    let pairs = ground_truth(&mut rng, &uris, &uris, 500, 0.0);
    let p = d.path().join("gt.tsv");
    write_gt_tsv(&p, &pairs).unwrap();
    let (loaded, report) = load_ground_truth(&p, GtFormat::TsvPairs).unwrap();
    let naive: HashSet<&GroundTruthPair> = pairs.iter().collect();
    assert_eq!(loaded.len(), naive.len());
    assert_eq!(loaded.iter().collect::<HashSet<_>>(), naive);
    assert_eq!(report.pairs_read, 500);
}

#[test]
fn duplicate_subject_in_entity_file_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let a = write(d.path(), "a.ents", "x\tp\tv\nx\tp\tw\n");
    let b = write(d.path(), "b.ents", "y\tp\tv\n");
    let gt = write(d.path(), "gt.tsv", "x\ty\n");
    let err = join2(&job2(&a, &b, &gt, ("aa", "bb"), &d.path().join("o")), &cfg(d.path(), 2, 1 << 20)).unwrap_err();
    assert!(matches!(err, JoinError::Exec(ExecError::Reduce { .. })), "{err}");
    let err = join2(&job2(&a, &b, &gt, ("same", "same"), &d.path().join("o")), &cfg(d.path(), 2, 1 << 20)).unwrap_err();
    assert!(matches!(err, JoinError::Config(_)));
}

fn link_file<S: AsRef<str>>(path: &Path, prefix: &str, labels: (&str, &str), rows: &[(S, S)]) {
    let body: String = rows
        .iter()
        .enumerate()
        .map(|(i, (l, r))| {
            let (l, r) = (l.as_ref(), r.as_ref());
            format!("{prefix}-{}\t{}-instance\t{l}\tp\tv\t{}-instance\t{r}\tq\tw\n", i + 1, labels.0, labels.1)
        })
        .collect();
    std::fs::write(path, body).unwrap();
}

#[test]
fn three_way_single_line_in_configured_order() {
    let d = tempfile::tempdir().unwrap();
    let fd = d.path().join("fd.links");
    let yd = d.path().join("yd.links");
    link_file(&fd, "fd", ("freebase", "dbpedia"), &[("f1", "d1"), ("f2", "d2")]);
    link_file(&yd, "yd", ("yago", "dbpedia"), &[("y1", "d1")]);
    let out = d.path().join("dfy.links");
    let job = Join3Job {
        left_links: fd,
        right_links: yd,
        shared_label: "dbpedia".into(),
        order: Some(vec!["dbpedia".into(), "freebase".into(), "yago".into()]),
        output: out.clone(),
    };
    let r = join3(&job, &cfg(d.path(), 2, 1 << 20)).unwrap();
    assert_eq!(r.lines_emitted, 1);
    assert_eq!(r.left_lines_unmatched, 1);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "fd-1,yd-1\tdbpedia-instance\td1\tq\tw\tfreebase-instance\tf1\tp\tv\tyago-instance\ty1\tp\tv\n"
    );
}

#[test]
fn three_way_count_identity_and_traceability() {
    let d = tempfile::tempdir().unwrap();
    let mut rng = synth::rng(21);
    // d3 gets exactly 2 FD and 3 YD links; the rest are random.
    let mut fd_rows: Vec<(String, String)> = vec![("f100".into(), "d3".into()), ("f101".into(), "d3".into())];
    let mut yd_rows: Vec<(String, String)> =
        vec![("y100".into(), "d3".into()), ("y101".into(), "d3".into()), ("y102".into(), "d3".into())];
    for i in 0..150 {
        fd_rows.push((format!("f{i}"), format!("d{}", 10 + rng.gen_range(0..60))));
        yd_rows.push((format!("y{i}"), format!("d{}", 10 + rng.gen_range(0..80))));
    }
    let fd = d.path().join("fd.links");
    let yd = d.path().join("yd.links");
    link_file(&fd, "fd", ("freebase", "dbpedia"), &fd_rows);
    link_file(&yd, "yd", ("yago", "dbpedia"), &yd_rows);

    let out = d.path().join("dfy.links");
    let job = Join3Job { left_links: fd.clone(), right_links: yd.clone(), shared_label: "dbpedia".into(), order: None, output: out.clone() };
    let r = join3(&job, &cfg(d.path(), 4, 16 << 10)).unwrap();
    assert_eq!(r.order, ["dbpedia", "freebase", "yago"]);

    let mut m: HashMap<&str, u64> = HashMap::new();
    let mut n: HashMap<&str, u64> = HashMap::new();
    for (_, dbp) in &fd_rows {
        *m.entry(dbp).or_default() += 1;
    }
    for (_, dbp) in &yd_rows {
        *n.entry(dbp).or_default() += 1;
    }
    let expected: u64 = m.iter().map(|(u, mu)| mu * n.get(u).copied().unwrap_or(0)).sum();
    let lines = read_lines(&out);
    assert_eq!(lines.len() as u64, expected);
    assert_eq!(r.lines_emitted, expected);

    let fd_lines: HashMap<String, Vec<(String, String)>> =
        read_lines(&fd).iter().map(|l| oracle_split_link(l)).collect();
    let yd_lines: HashMap<String, Vec<(String, String)>> =
        read_lines(&yd).iter().map(|l| oracle_split_link(l)).collect();
    let mut d3 = 0;
    let mut keys = Vec::new();
    for line in &lines {
        let (id, groups) = oracle_split_link(line);
        let (ida, idb) = id.split_once(',').unwrap();
        let labels: Vec<&str> = groups.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["dbpedia", "freebase", "yago"]);
        let a = &fd_lines[ida];
        let b = &yd_lines[idb];
        assert_eq!(groups[0].1, a[1].1, "shared record comes from the left file");
        assert_eq!(groups[1].1, a[0].1);
        assert_eq!(groups[2].1, b[0].1);
        assert_eq!(a[1].1, b[1].1, "both sources agree on the shared record");
        if groups[0].1.starts_with("d3\t") {
            d3 += 1;
        }
        let (pa, na) = split_link_id(ida).unwrap();
        let (pb, nb) = split_link_id(idb).unwrap();
        keys.push((pa.to_string(), na, pb.to_string(), nb));
    }
    assert_eq!(d3, 6);
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted, "3-way output must be ordered by (idA, idB)");
    assert_eq!(keys.iter().collect::<HashSet<_>>().len(), keys.len(), "id pairs must be unique");
}

#[test]
fn join2_ids_are_unique_over_a_full_join() {
    let d = tempfile::tempdir().unwrap();
    let (a_path, a) = entity_file(d.path(), "freebase", 400, 1);
    let (b_path, b) = entity_file(d.path(), "dbpedia", 400, 2);
    let left: Vec<String> = a.iter().map(|(u, _)| u.clone()).collect();
    let right: Vec<String> = b.iter().map(|(u, _)| u.clone()).collect();
    let pairs = ground_truth(&mut synth::rng(3), &left, &right, 2000, 0.1);
    let gt = d.path().join("gt.tsv");
    write_gt_tsv(&gt, &pairs).unwrap();
    let out = d.path().join("fd.links");
    let r = join2(&job2(&a_path, &b_path, &gt, ("freebase", "dbpedia"), &out), &cfg(d.path(), 8, 64 << 10)).unwrap();
    let ids: Vec<String> = read_lines(&out).iter().map(|l| l.split('\t').next().unwrap().to_string()).collect();
    assert_eq!(ids.len() as u64, r.lines_emitted);
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), ids.len());
    let numbers: Vec<u64> = ids.iter().map(|i| split_link_id(i).unwrap().1).collect();
    assert_eq!(numbers, (1..=ids.len() as u64).collect::<Vec<_>>());
}
