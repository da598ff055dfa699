//! Fork-join pool for the parallel dense kernels.

use cholnest_core::Parallelism;

/// A dedicated rayon pool. The first job runs on the calling thread.
#[derive(Debug)]
pub struct KernelPool {
    pool: rayon::ThreadPool,
}

impl KernelPool {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .thread_name(|i| format!("kernel-{i}"))
            .build()?;
        Ok(Self { pool })
    }
}

impl Parallelism for KernelPool {
    fn degree(&self) -> usize {
        self.pool.current_num_threads()
    }

    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        let Some((first, rest)) = jobs.split_first_mut() else {
            return;
        };
        self.pool.in_place_scope(|scope| {
            for job in rest.iter_mut() {
                scope.spawn(move |_| job());
            }
            first();
        });
    }
}
