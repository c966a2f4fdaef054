#include "train/trainer.hpp"

#include "rganet/metrics.hpp"
#include "rganet/optim.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

namespace rganet {
namespace train {

namespace {

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.integer(i)]);
}

} // namespace

metrics::Confusion dataset_confusion(model::RganetModel<float>& m,
                                     const std::vector<data::SegSample>& samples,
                                     int positive_class) {
    metrics::Confusion total;
    for (const auto& s : samples) {
        Tensor<float> probs = model::forward(m, s.image, Mode::eval);
        total += metrics::confusion(argmax_mask(probs, 0), s.mask, positive_class);
    }
    return total;
}

TrainResult run_training(const io::TrainFileConfig& cfg,
                         const std::vector<data::SegSample>& samples, std::ostream* progress) {
    check(!samples.empty(), "training: no samples");
    cfg.loss.validate();

    TrainResult result;
    result.model = model::build_model<float>(cfg.model, cfg.seed);
    auto& m = result.model;
    optim::AdamW<float> opt(cfg.opt);

    data::AugmentFlags aug;
    aug.hflip = cfg.aug_hflip;
    aug.shift = cfg.aug_shift;
    aug.rotate90 = cfg.aug_rotate90;

    std::ofstream log(cfg.out_log);
    if (!log) throw IoError("cannot open training log for writing: " + cfg.out_log);
    log << "epoch,loss,jaccard,precision,recall\n";

    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(cfg.seed * 1315423911ull + std::uint64_t(epoch));
        shuffle_indices(order, rng);

        double loss_sum = 0;
        int batches = 0;
        metrics::Confusion online;

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            std::vector<size_t> idx(order.begin() + start,
                                    order.begin() +
                                        std::min(order.size(), start + size_t(cfg.batch_size)));
            data::Batch batch = data::make_batch(samples, idx, aug, rng);

            Tape<float> tape;
            auto lists = m.params();
            for (auto& p : lists.trainable) tape.watch(*p.value);

            Tensor<float> probs = model::forward(m, batch.images, Mode::train);
            Tensor<float> loss = optim::compute_loss(probs, batch.targets, cfg.loss);
            const double lv = loss.scalar();
            if (!std::isfinite(lv))
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                                     " batch " + std::to_string(batches + 1));
            tape.backward(loss);

            std::vector<typename Tensor<float>::Storage> grads;
            grads.reserve(lists.trainable.size());
            for (auto& p : lists.trainable) grads.push_back(tape.grad(*p.value));
            std::vector<const typename Tensor<float>::Storage*> grad_ptrs;
            grad_ptrs.reserve(grads.size());
            for (auto& g : grads) grad_ptrs.push_back(&g);
            opt.step(lists.trainable, grad_ptrs);

            loss_sum += lv;
            ++batches;
            for (Index item = 0; item < batch.images.shape().n; ++item)
                online += metrics::confusion(argmax_mask(probs, item),
                                             batch.targets[size_t(item)], 2);
        }

        EpochStats st;
        st.epoch = epoch;
        st.loss = loss_sum / batches;
        auto cm = metrics::classic_metrics(online);
        st.jaccard = cm.jaccard;
        st.precision = cm.precision;
        st.recall = cm.recall;
        result.curve.push_back(st);
        log << st.epoch << "," << st.loss << "," << st.jaccard << "," << st.precision << ","
            << st.recall << "\n";
        if (progress && (epoch % 25 == 0 || epoch == 1 || epoch == cfg.epochs))
            (*progress) << "epoch " << epoch << "/" << cfg.epochs << " loss " << st.loss
                        << " iou " << st.jaccard << "\n";

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
            model::save_checkpoint(m, cfg.out_checkpoint);
        if (cfg.target_iou > 0 && st.jaccard >= cfg.target_iou) {
            if (progress)
                (*progress) << "target IoU " << cfg.target_iou << " reached at epoch " << epoch
                            << ", stopping\n";
            break;
        }
    }

    // Refresh BN running statistics under the final weights so eval-mode
    // inference sees the distribution the last updates actually produce.
    if (cfg.bn_recalibrate > 0) {
        Rng rng(cfg.seed);
        data::AugmentFlags no_aug;
        std::vector<size_t> all(samples.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        for (int pass = 0; pass < cfg.bn_recalibrate; ++pass)
            for (size_t start = 0; start < all.size(); start += size_t(cfg.batch_size)) {
                std::vector<size_t> idx(
                    all.begin() + start,
                    all.begin() + std::min(all.size(), start + size_t(cfg.batch_size)));
                data::Batch b = data::make_batch(samples, idx, no_aug, rng);
                model::forward(m, b.images, Mode::train);
            }
    }

    model::save_checkpoint(m, cfg.out_checkpoint);
    return result;
}

} // namespace train
} // namespace rganet
