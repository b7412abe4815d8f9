//! Combines two 2-way linkage files that share the dbpedia slot into 3-way
//! lines. Each output id is the pair of source ids, so every line can be
//! traced back.

use flatlink::exec::ExecConfig;
use flatlink::link_join::{join3, parse_link_line_arity, Join3Job};

const FD: &str = "\
fd-1\tfreebase-instance\tm.01\tname\t\"\"Messi\"\"\tdbpedia-instance\tLionel_Messi\tclub\tFC_Barcelona
fd-2\tfreebase-instance\tm.02\tname\t\"\"Marta\"\"\tdbpedia-instance\tMarta\tclub\tOrlando_Pride
fd-3\tfreebase-instance\tm.03\tname\t\"\"Leo Messi\"\"\tdbpedia-instance\tLionel_Messi\tclub\tFC_Barcelona
";

const YD: &str = "\
yd-1\tyago-instance\tLionel_Messi\ttype\twordnet_player\tdbpedia-instance\tLionel_Messi\tclub\tFC_Barcelona
yd-2\tyago-instance\tAda_Lovelace\ttype\twordnet_scientist\tdbpedia-instance\tAda_Lovelace\tborn\t\"\"1815\"\"
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let (fd, yd) = (dir.path().join("fd.links"), dir.path().join("yd.links"));
    std::fs::write(&fd, FD)?;
    std::fs::write(&yd, YD)?;

    let job = Join3Job {
        left_links: fd,
        right_links: yd,
        shared_label: "dbpedia".into(),
        order: Some(vec!["dbpedia".into(), "freebase".into(), "yago".into()]),
        output: dir.path().join("dbpedia_freebase_yago.links"),
    };
    let cfg = ExecConfig { spill_dir: dir.path().into(), ..ExecConfig::default() };
    let report = join3(&job, &cfg)?;
    println!("{report}");

    // Lionel_Messi has two Freebase links and one YAGO link: 2 x 1 lines.
    for line in std::fs::read_to_string(&job.output)?.lines() {
        let l = parse_link_line_arity(line, 3)?;
        let slots: Vec<String> = l.groups.iter().map(|(label, r)| format!("{label}={}", r.uri)).collect();
        println!("{} {}", l.id, slots.join(" "));
    }
    Ok(())
}
