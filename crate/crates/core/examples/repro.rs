use ptbench_core::pipeline::{Budgets, Workbench};
use ptbench_core::testgen::{generate, GenConfig};
use ptbench_core::SourceProgram;

fn main() {
    let seed = 11u64;
    let text = generate(seed, &GenConfig::small());
    let wb = Workbench::load(SourceProgram::single("g.mc", text.clone())).unwrap();
    let (fis, fs) = wb.run_fs(&Budgets::default()).unwrap();
    let cs = ptbench_core::contexts::run_cs(&wb.ir, &fis.pcg, 10_000, 4_096).unwrap();
    let f3 = wb.ir.func_by_name("f3").unwrap();
    let gp2 = wb.ir.parse_loc("g:gp2").unwrap();
    println!("FS boundary(f3)(gp2) = {:?}", fs.boundaries[&f3].get(gp2).map(|s| s.iter().map(|l| wb.ir.loc_name(*l)).collect::<Vec<_>>()));
    for e in &cs.contexts[&f3] {
        println!("CS ctx{} value(gp2) = {:?}", e.id, e.value.get(gp2).map(|s| s.iter().map(|l| wb.ir.loc_name(*l)).collect::<Vec<_>>()));
    }
    // who calls f3
    for (c, n, t) in &fis.pcg {
        if *t == f3 {
            let f = wb.ir.func(*c);
            println!("call from {} at line {}", f.name, f.spans[n.index()].line);
        }
    }
}
