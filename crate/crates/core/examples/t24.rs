use remfield::*;
fn main(){
  let m=FieldModel::rademacher(0.5,1.0).unwrap();
  let th=ThermoSolution::solve(&m).unwrap();
  let bc=th.beta_c;
  let mut s=ReplicaSpec::new(m,24,1,2,vec![0.25,0.5,bc,1.5*bc,2.0*bc]);
  s.entropy_grid=(0..13).map(|i| th.e_min*0.6+ (i as f64)*(1.2*th.e_max)/12.0).collect();
  let t=std::time::Instant::now();
  let r=run_replica(&s).unwrap();
  println!("{:?} recmax {} win {}", t.elapsed(), r.recentered_max, r.window_count);
}
