use mechlab_core::*;
use mechlab_core::gtree::*;
use mechlab_core::mechanisms::sd;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn main() {
    // Same generator stream as the failing test (seed 53).
    let mut rng = StdRng::seed_from_u64(53);
    for trial in 0..150 {
        let inst = mechlab_core::testkit::random_line_instance(&mut rng, 7, 3);
        let order = mechlab_core::testkit::random_ordering(&mut rng, inst.n_agents());
        for g in [1u64, 2, 3] {
            eprintln!("trial {trial} g {g} n {}", inst.n_agents());
            let opt = optimal(&inst).unwrap();
            let run = sd(&inst.augment(g).unwrap(), &order).unwrap();
            let rg = build_rep_graph(&inst, &opt, &run, g).unwrap();
            let forest = reduce(&rg, &inst, &order).unwrap();
            for tree in &forest.trees {
                for path in tree.enumerate_paths() {
                    let edges = tree.path_edges(&path);
                    let top = *edges.last().unwrap();
                    let slack: f64 = edges.iter().filter(|&&e| e != top)
                        .map(|&e| tree.edges[e].sd_dist + tree.edges[e].opt_dist).sum();
                    if tree.edges[top].sd_dist > tree.edges[top].opt_dist + slack + 1e-9 {
                        println!("VIOLATION trial={trial} g={g} order={:?} iterations={}", order.as_slice(), forest.iterations);
                        println!("  inst={inst:?}");
                        println!("  sd={:?} cost {}", run.assigned, run.cost);
                        println!("  opt={:?} cost {}", opt.assigned, opt.cost);
                        println!("  tree: root={} edges:", tree.root);
                        for (i, e) in tree.edges.iter().enumerate() {
                            println!("    e{i}: agent {} {} -> {} opt_d {:.4} sd_d {:.4}", e.agent, e.from, e.to, e.opt_dist, e.sd_dist);
                        }
                        println!("  bad path {:?}: top sd {:.4} > opt {:.4} + slack {:.4}", edges, tree.edges[top].sd_dist, tree.edges[top].opt_dist, slack);
                        return;
                    }
                }
            }
        }
    }
    println!("no violation found");
}
