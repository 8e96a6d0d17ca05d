use super::layer::{Gradients, MoeLayer};

/// Stochastic gradient descent with heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: None }
    }

    pub fn step(&mut self, layer: &mut MoeLayer, grads: &Gradients) {
        let velocity = self.velocity.get_or_insert_with(|| {
            let mut zero = grads.clone();
            zero.experts.iter_mut().for_each(|e| {
                e.w1.fill(0.0);
                e.b1.fill(0.0);
                e.w2.fill(0.0);
                e.b2.fill(0.0);
            });
            zero.router_weight.fill(0.0);
            zero.router_bias.fill(0.0);
            zero.cosine_projection.iter_mut().for_each(|p| p.fill(0.0));
            zero.cosine_experts.iter_mut().for_each(|p| p.fill(0.0));
            zero
        });
        let (lr, mu) = (self.lr, self.momentum);
        let update = |param: &mut ndarray::ArrayViewMut<'_, f64, ndarray::IxDyn>,
                      vel: &mut ndarray::ArrayViewMut<'_, f64, ndarray::IxDyn>,
                      grad: &ndarray::ArrayView<'_, f64, ndarray::IxDyn>| {
            ndarray::Zip::from(param).and(vel).and(grad).for_each(|p, v, &g| {
                *v = mu * *v + g;
                *p -= lr * *v;
            });
        };
        for ((expert, v), g) in layer.experts.iter_mut().zip(velocity.experts.iter_mut()).zip(&grads.experts) {
            update(&mut expert.w1.view_mut().into_dyn(), &mut v.w1.view_mut().into_dyn(), &g.w1.view().into_dyn());
            update(&mut expert.b1.view_mut().into_dyn(), &mut v.b1.view_mut().into_dyn(), &g.b1.view().into_dyn());
            update(&mut expert.w2.view_mut().into_dyn(), &mut v.w2.view_mut().into_dyn(), &g.w2.view().into_dyn());
            update(&mut expert.b2.view_mut().into_dyn(), &mut v.b2.view_mut().into_dyn(), &g.b2.view().into_dyn());
        }
        if !layer.router.is_trainable() {
            return;
        }
        update(
            &mut layer.router.weight.view_mut().into_dyn(),
            &mut velocity.router_weight.view_mut().into_dyn(),
            &grads.router_weight.view().into_dyn(),
        );
        update(
            &mut layer.router.bias.view_mut().into_dyn(),
            &mut velocity.router_bias.view_mut().into_dyn(),
            &grads.router_bias.view().into_dyn(),
        );
        if let (Some(c), Some(vp), Some(gp), Some(ve), Some(ge)) = (
            layer.router.cosine.as_mut(),
            velocity.cosine_projection.as_mut(),
            grads.cosine_projection.as_ref(),
            velocity.cosine_experts.as_mut(),
            grads.cosine_experts.as_ref(),
        ) {
            update(&mut c.projection.view_mut().into_dyn(), &mut vp.view_mut().into_dyn(), &gp.view().into_dyn());
            update(&mut c.experts.view_mut().into_dyn(), &mut ve.view_mut().into_dyn(), &ge.view().into_dyn());
            c.renormalize_experts();
        }
    }
}
