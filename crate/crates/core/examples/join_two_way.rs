//! Joins two synthetic entity files through a sameAs ground truth. Pairs
//! whose URIs are missing on either side are dropped and counted.

use flatlink::compile::{compile_kb, KbSpec};
use flatlink::exec::ExecConfig;
use flatlink::link_join::{join2, parse_link_line, GtFormat, Join2Job};
use flatlink::synth::{ground_truth, rng, write_gt_tsv, write_ntriples, KbGenerator, KbShape};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = ExecConfig { partitions: 4, memory_budget_bytes: 4 << 20, spill_dir: dir.path().into(), ..ExecConfig::default() };

    let mut entity_files = Vec::new();
    let mut shapes = Vec::new();
    for (label, seed) in [("freebase", 1), ("dbpedia", 2)] {
        let shape = KbShape::new(label, 500, 3_000);
        let nt = dir.path().join(format!("{label}.nt"));
        write_ntriples(&[&nt], KbGenerator::new(shape.clone(), seed), 0)?;
        let ents = dir.path().join(format!("{label}.ents"));
        compile_kb(&KbSpec::new(label, vec![nt], &ents), &cfg)?;
        entity_files.push(ents);
        shapes.push(shape);
    }

    let pairs = ground_truth(&mut rng(3), &shapes[0].subject_uris(), &shapes[1].subject_uris(), 400, 0.25);
    let gt = dir.path().join("fd.tsv");
    write_gt_tsv(&gt, &pairs)?;

    let job = Join2Job {
        left_entities: entity_files[0].clone(),
        right_entities: entity_files[1].clone(),
        ground_truth: gt,
        gt_format: GtFormat::TsvPairs,
        left_label: "freebase".into(),
        right_label: "dbpedia".into(),
        output: dir.path().join("freebase_dbpedia.links"),
    };
    let report = join2(&job, &cfg)?;
    println!("{report}");

    let text = std::fs::read_to_string(&job.output)?;
    let first = parse_link_line(text.lines().next().unwrap())?;
    println!("{} links {} to {}", first.id, first.groups[0].1.uri, first.groups[1].1.uri);
    Ok(())
}
