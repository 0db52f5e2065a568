use std::io::Cursor;

use mspinn::io::{
    artifact_names, load_checkpoint, load_report, parse_loss_table, read_checkpoint,
    read_network, reference_table, solution_table, spectrum_table, write_checkpoint,
    write_network, write_run_artifacts, Table,
};
use mspinn::multistage::{run, CollocationConfig, CompositeSolution, Method, RunConfig, StageInit, StageRecord};
use mspinn::network::{xavier_init, InitConfig, Layer, NetworkParams, FirstLayerKind};
use mspinn::optim::OptimConfig;
use mspinn::problems::{HelmholtzProblem, ProblemConfig};

fn record(index: usize, network: NetworkParams, epsilon: f64, init: StageInit) -> StageRecord {
    StageRecord {
        index,
        network,
        epsilon,
        seed: 42,
        init,
        history: Vec::new(),
        initial_loss: 1.5,
        final_loss: 0.25,
        lbfgs_status: None,
    }
}

fn networks() -> Vec<NetworkParams> {
    vec![
        xavier_init(&[2, 7, 5, 1], 9).unwrap(),
        NetworkParams::spectral_embedding(
            &[vec![1.0, 2.0], vec![-3.0, 0.5]],
            &[0.1, 0.2],
            &[1.0, 0.3],
            &[2, 6, 1],
            3,
        )
        .unwrap()
        .with_frozen_first_layer(true),
        NetworkParams::rff(&[vec![0.5, 1.5], vec![2.0, -1.0], vec![0.0, 1.0]], &[0.3, 1.2, 5.9], &[3, 4, 1], 5)
            .unwrap(),
    ]
}

#[test]
fn network_checkpoints_round_trip_exactly() {
    for net in networks() {
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        let back = read_network(&mut Cursor::new(&buf)).unwrap();
        assert_eq!(back, net);
        let mut again = Vec::new();
        write_network(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let mut buf = Vec::new();
    write_network(&mut buf, &networks()[0]).unwrap();
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_network(&mut Cursor::new(&bad)).is_err());
    let mut bad = buf.clone();
    bad[8] = 9;
    assert!(read_network(&mut Cursor::new(&bad)).is_err());
    assert!(read_network(&mut Cursor::new(&buf[..buf.len() - 3])).is_err());
}

#[test]
fn composite_checkpoint_round_trips() {
    let nets = networks();
    let sol = CompositeSolution::from_stages(vec![
        record(0, nets[0].clone(), 1.0, StageInit::Xavier),
        record(
            1,
            nets[2].clone(),
            3.5e-3,
            StageInit::Frequencies {
                frequencies: vec![[0.5, 1.5], [2.0, -1.0], [0.0, 1.0]],
                uniform_fallback: false,
            },
        ),
    ])
    .unwrap();
    let problem = ProblemConfig::default();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &problem, &sol).unwrap();
    let ck = read_checkpoint(&mut Cursor::new(&buf)).unwrap();
    assert_eq!(ck.problem, problem);
    assert_eq!(ck.solution, sol);

    let helmholtz = ProblemConfig::Helmholtz(HelmholtzProblem::default());
    assert!(ck.check_problem(helmholtz.as_problem()).is_err());
}

#[test]
fn csv_tables_round_trip() {
    let problem = ProblemConfig::default();
    let p = problem.as_problem();
    let layer = Layer {
        inputs: 2,
        outputs: 1,
        weights: vec![0.1, -1.0 / 3.0],
        biases: vec![std::f64::consts::PI],
    };
    let net = NetworkParams::from_parts(vec![layer], FirstLayerKind::Plain, vec![], 0).unwrap();
    let sol = CompositeSolution::new(record(0, net, 1.0, StageInit::Xavier));
    let t = solution_table(&sol, p, [5, 4]).unwrap();
    assert_eq!(t.header, ["x", "t", "u", "u_ref"]);
    assert_eq!(t.rows.len(), 20);
    let mut buf = Vec::new();
    t.write(&mut buf).unwrap();
    let back = Table::read(Cursor::new(&buf)).unwrap();
    assert_eq!(back, t);
    for r in 0..t.rows.len() {
        let (x, y, u) = (
            back.number(r, "x").unwrap().unwrap(),
            back.number(r, "t").unwrap().unwrap(),
            back.number(r, "u").unwrap().unwrap(),
        );
        let exact = sol.values(&[x, y]).unwrap()[0];
        assert_eq!(u, exact);
    }

    let r = reference_table(ProblemConfig::Helmholtz(HelmholtzProblem::default()).as_problem(), [3, 3]).unwrap();
    assert_eq!(r.header, ["x", "y", "e_rz", "e_iz"]);
}

#[test]
fn spectrum_table_has_grid_and_mode_rows() {
    let problem = ProblemConfig::default();
    let mut net = xavier_init(&[2, 4, 1], 1).unwrap();
    net.set_params(&vec![0.0; net.n_params()]).unwrap();
    let sol = CompositeSolution::new(record(0, net, 1.0, StageInit::Xavier));
    // A zero network has zero interior residual: only grid rows survive.
    let t = spectrum_table(&sol, problem.as_problem(), [8, 4], 5).unwrap();
    assert_eq!(t.rows.len(), 32);
    for r in 0..t.rows.len() {
        assert_eq!(t.number(r, "power").unwrap(), Some(0.0));
    }

    let layer = Layer {
        inputs: 2,
        outputs: 1,
        weights: vec![1.0, 0.0],
        biases: vec![0.0],
    };
    let net = NetworkParams::from_parts(vec![layer], FirstLayerKind::Plain, vec![], 0).unwrap();
    let sol = CompositeSolution::new(record(0, net, 1.0, StageInit::Xavier));
    let t = spectrum_table(&sol, problem.as_problem(), [8, 4], 5).unwrap();
    assert_eq!(t.rows.len(), 32 + 5);
    let modes: Vec<usize> = (0..t.rows.len()).filter(|&r| t.rows[r][0] == "mode").collect();
    assert_eq!(modes.len(), 5);
    // Residual of u = x is x itself, so no mode carries t-frequency content.
    for &r in &modes {
        assert_eq!(t.number(r, "k_y").unwrap(), Some(0.0));
    }
}

#[test]
fn run_artifacts_are_readable_and_deterministic() {
    let cfg = RunConfig {
        method: Method::SiMspinn,
        stages: 1,
        seed: 3,
        init: InitConfig {
            depth: 2,
            width: 6,
            features: 4,
            ..Default::default()
        },
        optim: OptimConfig {
            adam_steps: 10,
            lbfgs_max_iters: 5,
            ..Default::default()
        },
        collocation: CollocationConfig {
            interior: 40,
            boundary: 8,
            initial: 8,
            ..Default::default()
        },
        spectrum_grid: [8, 8],
        eval_grid: [6, 6],
        ..Default::default()
    };
    let out = run(&cfg).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let report = write_run_artifacts(a.path(), &out).unwrap();
    write_run_artifacts(b.path(), &run(&cfg).unwrap()).unwrap();
    for name in artifact_names(2) {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs between identical runs");
    }
    assert_eq!(load_report(&a.path().join("report.toml")).unwrap(), report);
    let ck = load_checkpoint(&a.path().join("solution.ckpt")).unwrap();
    assert_eq!(ck.solution.stages().len(), 2);
    for (s, t) in ck.solution.stages().iter().zip(out.solution.stages()) {
        assert_eq!(s.network, t.network);
        assert_eq!(s.epsilon, t.epsilon);
        assert_eq!(s.init, t.init);
    }
    let losses = parse_loss_table(&Table::load(&a.path().join("stage_1_loss.csv")).unwrap()).unwrap();
    assert_eq!(losses, out.solution.stages()[1].history);
    let cfg_back = mspinn::io::load_config(&a.path().join("config.toml")).unwrap();
    assert_eq!(cfg_back, cfg);
}
