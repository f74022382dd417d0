#include <gtest/gtest.h>

#include "systemmatch/distance.hpp"
#include "systemmatch/errors.hpp"
#include "systemmatch/synthetic.hpp"

using namespace systemmatch;

TEST(GenerateSynthetic, PlantedOrderAndDeterminism) {
    SyntheticSpec spec;
    spec.query_positions = {0.0, 1.0, 0.5};
    auto a = generate_synthetic(spec), b = generate_synthetic(spec);
    EXPECT_EQ(a.planted_order, (std::vector<std::string>{"query1", "query2", "query0"}));
    EXPECT_EQ(a.collection.target().matrix.values(), b.collection.target().matrix.values());
    EXPECT_EQ(a.collection.queries()[2].matrix.values(), b.collection.queries()[2].matrix.values());
    EXPECT_EQ(a.collection.target().matrix.norm_state(), NormState::raw_counts);
}

TEST(GenerateSynthetic, NoiseFreeTargetCopyHasZeroDistance) {
    SyntheticSpec spec;
    spec.query_positions = {1.0, 0.3};
    auto s = generate_synthetic(spec);
    const auto& c = s.collection;
    ConditionDataset t("t", log_normalize(c.target().matrix)), q("q", log_normalize(c.queries()[0].matrix));
    EXPECT_EQ(l2_pseudobulk_distance(t, q), 0.0);
}

TEST(GenerateSynthetic, Validation) {
    SyntheticSpec spec;
    spec.n_signature_genes = spec.n_genes + 1;
    EXPECT_THROW(generate_synthetic(spec), UsageError);
    SyntheticSpec empty;
    empty.query_positions.clear();
    EXPECT_THROW(generate_synthetic(empty), UsageError);
}

TEST(GeneratePerturbational, AdditiveByConstruction) {
    PerturbationalSpec spec;
    spec.n_genes = 4;
    spec.noise = 0;
    spec.addons = {"A", "B"};
    spec.bases = {"base"};
    spec.held_out = {{"base", {"A", "B"}}};
    spec.base_vectors["base"] = Eigen::Vector4d(3, 3, 3, 3);
    spec.effect_vectors["A"] = Eigen::Vector4d(1, 0, 0, 0);
    spec.effect_vectors["B"] = Eigen::Vector4d(0, 1, 0, 0);
    auto data = generate_synthetic_perturbational(spec);
    auto held = data.held_out();
    ASSERT_EQ(held.size(), 1u);
    EXPECT_EQ(held[0].condition_id, "base+A+B");
    EXPECT_EQ(held[0].role, DatasetRole::held_out);
    EXPECT_LT((pseudobulk(held[0]) - Eigen::Vector4d(4, 4, 3, 3)).norm(), 1e-12);
    EXPECT_EQ(data.tested_ids(), (std::set<std::string>{"base", "base+A", "base+B"}));
}

TEST(GeneratePerturbational, ZeroEffectsGiveIdenticalConditions) {
    PerturbationalSpec spec;
    spec.noise = 0;
    spec.effect_size = 0;
    auto data = generate_synthetic_perturbational(spec);
    auto first = pseudobulk(data.conditions[0].data);
    for (const auto& c : data.conditions) {
        if (c.base == data.conditions[0].base) EXPECT_LT((pseudobulk(c.data) - first).norm(), 1e-12);
    }
}

TEST(GeneratePerturbational, SameSeedSameSplit) {
    PerturbationalSpec spec;
    spec.seed = 12;
    auto a = generate_synthetic_perturbational(spec), b = generate_synthetic_perturbational(spec);
    ASSERT_EQ(a.conditions.size(), b.conditions.size());
    for (std::size_t i = 0; i < a.conditions.size(); ++i) {
        EXPECT_EQ(a.conditions[i].data.condition_id, b.conditions[i].data.condition_id);
        EXPECT_EQ(a.conditions[i].data.matrix.values(), b.conditions[i].data.matrix.values());
        EXPECT_EQ(a.conditions[i].held_out, b.conditions[i].held_out);
    }
    EXPECT_EQ(a.conditions.size(), 2u * 7 + 6);
}

TEST(GeneratePerturbational, BatchCovariates) {
    PerturbationalSpec spec;
    spec.n_batches = 3;
    auto data = generate_synthetic_perturbational(spec);
    auto covs = data.training_set().covariate_vocabulary();
    EXPECT_EQ(covs.classes, (std::vector<std::string>{"base", "batch"}));
    EXPECT_EQ(covs.levels[1].size(), 3u);
}
