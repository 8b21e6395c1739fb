#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <lddmm/enkf.hpp>
#include <lddmm/synth.hpp>

#include "oracle/oracles.hpp"
#include "test_util.hpp"

using namespace lddmm;

namespace {

EnkfConfig serial_config() {
    EnkfConfig cfg;
    cfg.threads = 1;
    return cfg;
}

double rel_diff(const Coords &a, const Coords &b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    return scale == 0.0 ? 0.0 : (a - b).cwiseAbs().maxCoeff() / scale;
}

Eigen::Index numeric_rank(const Eigen::MatrixXd &m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto &s = svd.singularValues();
    const double cut = 1e-9 * std::max(1.0, s.size() ? s[0] : 0.0);
    return (s.array() > cut).count();
}

Eigen::MatrixXd centred(const Ensemble &e) {
    Eigen::MatrixXd m = e.as_matrix();
    const Vec mean = m.rowwise().mean();
    return m.colwise() - mean;
}

}  // namespace

TEST(EnsembleType, RequiresTwoMembersOfOneShape) {
    EXPECT_THROW(Ensemble({MomentumSet(2, 3)}), InvalidInput);
    EXPECT_THROW(Ensemble({MomentumSet(2, 3), MomentumSet(2, 4)}), InvalidInput);
    EXPECT_NO_THROW(Ensemble({MomentumSet(2, 3), MomentumSet(2, 3)}));
}

TEST(EnsembleMean, IdenticalMembers) {
    const MomentumSet m{{1, 2}, {-3, 0.5}};
    EXPECT_EQ(ensemble_mean(Ensemble({m, m, m})), m);
}

TEST(EnsembleMean, OppositeMembersCancel) {
    const MomentumSet m{{1, 2}, {-3, 0.5}};
    EXPECT_EQ(ensemble_mean(Ensemble({m, -m})), MomentumSet(2, 2));
}

TEST(EnsembleMean, MatchesBruteForceAverage) {
    testkit::Gen gen(20);
    const auto e = gen.ensemble(5, 2, 3);
    const auto mean = ensemble_mean(e);
    for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) { s += e[j](c, i); }
            EXPECT_NEAR(mean(c, i), s / 5.0, 1e-15);
        }
    }
}

TEST(EnsembleForward, ZeroMembersPredictTemplate) {
    const LandmarkSet q0{{0, 1}, {1, 0}, {-1, 0}};
    const auto pred = ensemble_forward(Ensemble({MomentumSet(2, 3), MomentumSet(2, 3)}), q0, serial_config());
    EXPECT_EQ(pred.mean, q0);
    for (const auto &p : pred.predictions) { EXPECT_EQ(p, q0); }
}

TEST(EnsembleForward, SingleLandmarkOppositeMembers) {
    const LandmarkSet q0{{0.5, 0.5}};
    const auto pred = ensemble_forward(Ensemble({MomentumSet{{1, 0}}, MomentumSet{{-1, 0}}}), q0, serial_config());
    EXPECT_NEAR(pred.predictions[0](0, 0), 1.5, 1e-14);
    EXPECT_NEAR(pred.predictions[1](0, 0), -0.5, 1e-14);
    EXPECT_NEAR(pred.mean(0, 0), 0.5, 1e-14);
    EXPECT_EQ(pred.mean(1, 0), 0.5);
}

TEST(EnsembleForward, MeanOfIndividualForwards) {
    testkit::Gen gen(21);
    const auto q0 = gen.points(2, 3);
    const auto e = gen.ensemble(4, 2, 3);
    const auto cfg = serial_config();
    const auto pred = ensemble_forward(e, q0, cfg);
    Coords sum = Coords::Zero(2, 3);
    for (std::size_t j = 0; j < 4; ++j) {
        const auto f = forward(q0, e[j], cfg.time_grid, cfg.kernel);
        EXPECT_EQ(pred.predictions[j], f);
        sum += f.coords();
    }
    EXPECT_LE((pred.mean.coords() - sum / 4.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EnsembleForward, ThreadCountDoesNotChangeResult) {
    testkit::Gen gen(22);
    const auto q0 = gen.points(2, 6);
    const auto e = gen.ensemble(9, 2, 6);
    auto cfg = serial_config();
    const auto serial = ensemble_forward(e, q0, cfg);
    cfg.threads = 4;
    const auto threaded = ensemble_forward(e, q0, cfg);
    EXPECT_EQ(serial.mean, threaded.mean);
    EXPECT_EQ(serial.predictions, threaded.predictions);
}

TEST(EnsembleForward, BlowUpNamesMember) {
    const LandmarkSet q0{{-1, 0}, {1, 0}};
    const Ensemble e({MomentumSet(2, 2), MomentumSet{{1e300, 0}, {-1e300, 0}}, MomentumSet(2, 2)});
    try {
        ensemble_forward(e, q0, serial_config());
        FAIL() << "expected member blow-up";
    } catch (const MemberBlowUp &err) {
        EXPECT_EQ(err.member(), 1u);
        EXPECT_EQ(err.iteration(), 0u);
    }
}

TEST(Anomalies, IdenticalMembersGiveZero) {
    const MomentumSet m{{1, 2}};
    const LandmarkSet f{{3, 4}};
    const auto a = anomalies(Ensemble({m, m, m}), {f, f, f});
    EXPECT_EQ(a.ap, Eigen::MatrixXd::Zero(2, 3));
    EXPECT_EQ(a.aq, Eigen::MatrixXd::Zero(2, 3));
}

TEST(Anomalies, TwoMembersAreOpposite) {
    testkit::Gen gen(23);
    const auto e = gen.ensemble(2, 2, 3);
    const auto a = anomalies(e, {gen.points(2, 3), gen.points(2, 3)});
    EXPECT_LE((a.ap.col(0) + a.ap.col(1)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((a.aq.col(0) + a.aq.col(1)).cwiseAbs().maxCoeff(), 1e-15);
    // sqrt(N_E - 1) = 1, so each column is half the member difference
    EXPECT_LE((a.ap.col(0) - 0.5 * (e[0].flat() - e[1].flat())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Anomalies, FactoriseSampleCovariance) {
    testkit::Gen gen(24);
    const auto e = gen.ensemble(5, 2, 3);
    std::vector<LandmarkSet> preds;
    for (int j = 0; j < 5; ++j) { preds.push_back(gen.points(2, 3)); }
    const auto a = anomalies(e, preds);
    const Eigen::MatrixXd cov_qq = a.aq * a.aq.transpose();
    const Eigen::MatrixXd cov_pq = a.ap * a.aq.transpose();
    Vec fbar = Vec::Zero(6), pbar = Vec::Zero(6);
    for (int j = 0; j < 5; ++j) {
        fbar += preds[j].flat() / 5.0;
        pbar += e[j].flat() / 5.0;
    }
    Eigen::MatrixXd brute_qq = Eigen::MatrixXd::Zero(6, 6), brute_pq = Eigen::MatrixXd::Zero(6, 6);
    for (int j = 0; j < 5; ++j) {
        const Vec dq = preds[j].flat() - fbar;
        const Vec dp = e[j].flat() - pbar;
        brute_qq += dq * dq.transpose() / 4.0;
        brute_pq += dp * dq.transpose() / 4.0;
    }
    EXPECT_LE((cov_qq - brute_qq).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((cov_pq - brute_pq).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Anomalies, LengthMismatchRejected) {
    testkit::Gen gen(25);
    EXPECT_THROW(anomalies(gen.ensemble(3, 2, 2), {LandmarkSet(2, 2)}), InvalidInput);
}

TEST(KalmanApply, CollapsedEnsembleHasZeroGain) {
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 3);
    const auto out = kalman_apply(zero, zero, 1.0, LandmarkSet{{1, 2}, {3, 4}});
    EXPECT_EQ(out.coords(), Coords::Zero(2, 2));
}

TEST(KalmanApply, ZeroResidualGivesZero) {
    testkit::Gen gen(26);
    const Eigen::MatrixXd ap = Eigen::MatrixXd::Random(4, 3), aq = Eigen::MatrixXd::Random(4, 3);
    EXPECT_EQ(kalman_apply(ap, aq, 0.5, LandmarkSet(2, 2)).coords(), Coords::Zero(2, 2));
}

TEST(KalmanApply, ScalarHandComputation) {
    // p = {1, 3}, f = {2, 5}: s_pq = 3, s_qq = 4.5; xi = 1, r = 2 -> 3 * 2 / 5.5 = 12/11
    const Ensemble e({MomentumSet{{1.0}}, MomentumSet{{3.0}}});
    const auto a = anomalies(e, {LandmarkSet{{2.0}}, LandmarkSet{{5.0}}});
    const auto out = kalman_apply(a.ap, a.aq, 1.0, LandmarkSet{{2.0}});
    EXPECT_NEAR(out(0, 0), 12.0 / 11.0, 4 * std::numeric_limits<double>::epsilon());
}

TEST(KalmanApply, MatchesBruteGainOracle) {
    testkit::Gen gen(27);
    for (int trial = 0; trial < 10; ++trial) {
        const auto e = gen.ensemble(6, 2, 4);
        std::vector<LandmarkSet> preds;
        for (int j = 0; j < 6; ++j) { preds.push_back(gen.points(2, 4, -2, 2)); }
        const auto r = gen.points(2, 4);
        const double xi = gen.uniform(0.1, 5);
        const auto a = anomalies(e, preds);
        EXPECT_LE(rel_diff(kalman_apply(a.ap, a.aq, xi, r).coords(), oracle::brute_gain(e, preds, xi, r).coords()),
                  1e-10);
    }
}

TEST(KalmanApply, EnsembleSpaceSolverMatchesDense) {
    testkit::Gen gen(28);
    for (std::size_t n : {2u, 5u, 30u}) {
        const auto e = gen.ensemble(n, 2, 5);
        std::vector<LandmarkSet> preds;
        for (std::size_t j = 0; j < n; ++j) { preds.push_back(gen.points(2, 5)); }
        const auto a = anomalies(e, preds);
        const auto r = gen.points(2, 5);
        const auto dense = kalman_apply(a.ap, a.aq, 0.7, r, GainSolver::Dense);
        const auto small = kalman_apply(a.ap, a.aq, 0.7, r, GainSolver::EnsembleSpace);
        EXPECT_LE(rel_diff(dense.coords(), small.coords()), 1e-10) << "N_E = " << n;
    }
}

TEST(KalmanApply, NegativeOrNonFiniteXiIsNumericalError) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random(2, 3);
    EXPECT_THROW(kalman_apply(a, a, -1.0, LandmarkSet{{1, 1}}), NumericalError);
    EXPECT_THROW(kalman_apply(a, a, std::numeric_limits<double>::infinity(), LandmarkSet{{1, 1}}), NumericalError);
    // rank 1 covariance on a 4-dim space with no regularisation
    const Eigen::MatrixXd one = (Eigen::MatrixXd(4, 2) << 1, -1, 0, 0, 0, 0, 0, 0).finished();
    EXPECT_THROW(kalman_apply(one, one, 0.0, LandmarkSet{{1, 1}, {1, 1}}), NumericalError);
}

TEST(KalmanApply, RegularisationShrinksGainMonotonically) {
    // scalar: s_pq r / (s_qq + xi) decreases in xi
    const Ensemble e({MomentumSet{{1.0}}, MomentumSet{{3.0}}});
    const auto a = anomalies(e, {LandmarkSet{{2.0}}, LandmarkSet{{5.0}}});
    double prev = std::numeric_limits<double>::infinity();
    for (double xi : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        const double out = kalman_apply(a.ap, a.aq, xi, LandmarkSet{{1.0}})(0, 0);
        EXPECT_LT(out, prev);
        prev = out;
    }
    // spectral norm of (Cov_QQ + xi I)^-1 is 1 / (lambda_min + xi)
    testkit::Gen gen(29);
    const Eigen::MatrixXd aq = Eigen::MatrixXd::Random(6, 4);
    const Eigen::MatrixXd cov = aq * aq.transpose();
    double prev_norm = std::numeric_limits<double>::infinity();
    for (double xi : {0.1, 1.0, 10.0}) {
        const Eigen::MatrixXd inv = (cov + xi * Eigen::MatrixXd::Identity(6, 6)).inverse();
        const double norm = Eigen::JacobiSVD<Eigen::MatrixXd>(inv).singularValues()[0];
        EXPECT_LT(norm, prev_norm);
        prev_norm = norm;
    }
}

TEST(EnkfMatch, InitialMisfitDefinition) {
    testkit::Gen gen(30);
    const auto q0 = gen.points(2, 4);
    const auto e0 = gen.ensemble(5, 2, 4, -1e-3, 1e-3);
    auto cfg = serial_config();
    cfg.max_iterations = 3;
    const auto res = enkf_match(q0, q0, e0, cfg);
    const auto pred = ensemble_forward(e0, q0, cfg);
    EXPECT_EQ(res.trace.values.front(), (q0 - pred.mean).squared_norm());
    EXPECT_LT(res.trace.values.front(), 1e-5);
}

TEST(EnkfMatch, CollapsedEnsembleIsFixedPoint) {
    const LandmarkSet q0{{1, 0}, {0, 1}, {-1, 0}};
    const LandmarkSet q1{{1.2, 0.1}, {0, 1.3}, {-0.8, 0}};
    const MomentumSet m{{0.1, 0.2}, {-0.3, 0.0}, {0.05, 0.1}};
    const Ensemble e0({m, m, m, m});
    auto cfg = serial_config();
    cfg.max_iterations = 5;
    const auto res = enkf_match(q0, q1, e0, cfg);
    EXPECT_EQ(res.final.members(), e0.members());
    EXPECT_EQ(res.trace.values.size(), 6u);
    for (double v : res.trace.values) { EXPECT_EQ(v, res.trace.values.front()); }
    EXPECT_FALSE(res.trace.converged);
}

TEST(EnkfMatch, TraceLengthAndStopping) {
    SynthSpec spec;
    spec.landmarks = 6;
    spec.ensemble_size = 8;
    spec.seed = 3;
    auto cfg = serial_config();
    cfg.max_iterations = 7;
    const auto target = make_target(spec, cfg);
    const auto res = enkf_match(target.q0, target.q1, make_initial_ensemble(spec), cfg);
    EXPECT_EQ(res.trace.values.size(), 8u);
    EXPECT_EQ(res.trace.iterations_run, 7u);
    EXPECT_EQ(res.final.generation(), 7u);
    EXPECT_EQ(res.record.mean_update_norms.size(), 7u);
    for (double v : res.trace.values) { EXPECT_GE(v, 0.0); }
    EXPECT_EQ(res.final_prediction, ensemble_forward(res.final, target.q0, cfg).mean);
    EXPECT_EQ(res.record.final_mean_momentum, ensemble_mean(res.final));
}

TEST(EnkfMatch, ConvergesImmediatelyWhenWithinTolerance) {
    const LandmarkSet q0{{1, 0}, {0, 1}};
    auto cfg = serial_config();
    const auto res = enkf_match(q0, q0, Ensemble({MomentumSet(2, 2), MomentumSet(2, 2)}), cfg);
    EXPECT_TRUE(res.trace.converged);
    EXPECT_EQ(res.trace.iterations_run, 0u);
    EXPECT_EQ(res.trace.values.size(), 1u);
}

TEST(EnkfMatch, AffineSpanRankDoesNotIncrease) {
    SynthSpec spec;
    spec.landmarks = 8;
    spec.ensemble_size = 5;
    spec.seed = 4;
    auto cfg = serial_config();
    const auto target = make_target(spec, cfg);
    Ensemble e = make_initial_ensemble(spec);
    const Eigen::MatrixXd before = centred(e);
    cfg.max_iterations = 1;
    const auto res = enkf_match(target.q0, target.q1, e, cfg);
    const Eigen::MatrixXd after = centred(res.final);
    EXPECT_LE(numeric_rank(after), numeric_rank(before));
    // every updated member lies in the affine hull of the old ensemble
    const Vec mean0 = e.as_matrix().rowwise().mean();
    Eigen::MatrixXd shifted = res.final.as_matrix().colwise() - mean0;
    const Eigen::MatrixXd coeffs = before.colPivHouseholderQr().solve(shifted);
    EXPECT_LE((before * coeffs - shifted).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EnkfMatch, MeanUpdateConsistency) {
    SynthSpec spec;
    spec.landmarks = 6;
    spec.ensemble_size = 7;
    spec.seed = 5;
    auto cfg = serial_config();
    const auto target = make_target(spec, cfg);
    const Ensemble e0 = make_initial_ensemble(spec);
    cfg.max_iterations = 1;
    const auto res = enkf_match(target.q0, target.q1, e0, cfg);
    const auto pred = ensemble_forward(e0, target.q0, cfg);
    const auto a = anomalies(e0, pred.predictions);
    const MomentumSet expect = ensemble_mean(e0) + kalman_apply(a.ap, a.aq, cfg.xi, target.q1 - pred.mean);
    EXPECT_LE((ensemble_mean(res.final).coords() - expect.coords()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EnkfMatch, BitIdenticalAcrossThreadCounts) {
    SynthSpec spec;
    spec.landmarks = 10;
    spec.ensemble_size = 10;
    spec.seed = 6;
    auto cfg = serial_config();
    cfg.max_iterations = 10;
    const auto target = make_target(spec, cfg);
    const auto e0 = make_initial_ensemble(spec);
    const auto serial = enkf_match(target.q0, target.q1, e0, cfg);
    for (std::size_t threads : {2u, 3u, 8u}) {
        cfg.threads = threads;
        const auto par = enkf_match(target.q0, target.q1, e0, cfg);
        EXPECT_EQ(par.trace, serial.trace);
        EXPECT_EQ(par.final, serial.final);
    }
}

TEST(EnkfMatch, ReducesMisfitOnSyntheticProblem) {
    SynthSpec spec;
    spec.landmarks = 10;
    spec.ensemble_size = 10;
    spec.seed = 7;
    const auto cfg = serial_config();
    const auto target = make_target(spec, cfg);
    const auto res = enkf_match(target.q0, target.q1, make_initial_ensemble(spec), cfg);
    EXPECT_LT(res.trace.final(), 0.5 * res.trace.initial());
}

TEST(EnkfMatch, RejectsInconsistentShapes) {
    const LandmarkSet q0{{1, 0}, {0, 1}};
    const Ensemble e({MomentumSet(2, 3), MomentumSet(2, 3)});
    EXPECT_THROW(enkf_match(q0, q0, e, serial_config()), InvalidInput);
    EXPECT_THROW(enkf_match(q0, LandmarkSet{{1, 0}}, Ensemble({MomentumSet(2, 2), MomentumSet(2, 2)}), serial_config()),
                 InvalidInput);
    auto cfg = serial_config();
    cfg.max_iterations = 0;
    EXPECT_THROW(enkf_match(q0, q0, Ensemble({MomentumSet(2, 2), MomentumSet(2, 2)}), cfg), InvalidInput);
}
