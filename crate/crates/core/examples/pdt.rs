fn main(){
  let t=std::time::Instant::now();
  let r=remfield::extremal::pd_reference_moments(0.5, 2000, 5);
  println!("{:?} {:?}", t.elapsed(), r);
}
