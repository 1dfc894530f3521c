use ctxd_core::micro::{run_leg, LegConfig};
use ctxd_core::synth::Mode;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map_or(30, |a| a.parse().unwrap());
    let lr: f64 = args.get(2).map_or(3e-3, |a| a.parse().unwrap());
    for mode in [Mode::Applicable, Mode::AllContext, Mode::SeedsOnly] {
        let mut c = LegConfig::new(mode);
        c.train.epochs = epochs;
        c.train.learning_rate = lr;
        let t = std::time::Instant::now();
        let (r, o) = run_leg(&c, dir.path()).unwrap();
        println!("{:?} {:?} steps={} last_loss={:.4} {:.1}s", mode, r, o.loss_history.len(), o.loss_history.last().unwrap(), t.elapsed().as_secs_f64());
    }
}
