#include "dwifob/svm_problem.hpp"

#include "dwifob/operators.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <system_error>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace dwifob {

namespace {

struct RawSample {
    double label;
    std::size_t line;
    std::vector<std::pair<Eigen::Index, double>> entries;
};

bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_index(std::string_view s, long long& out) {
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

class Fnv1a {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= c[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void value(const T& v) {
        bytes(&v, sizeof v);
    }
    std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex_key(std::uint64_t key) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(key));
    return buf;
}

// Holds an exclusive advisory lock for the lifetime of the object.
class FileLock {
public:
    explicit FileLock(const std::filesystem::path& path) {
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw std::runtime_error("cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw std::runtime_error("cannot lock " + path.string());
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

void write_hex(std::ostream& out, double v) { out << std::hexfloat << v << std::defaultfloat; }

double read_hex(std::istream& in) {
    std::string token;
    if (!(in >> token)) throw std::runtime_error("reference cache: truncated file");
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) {
        throw std::runtime_error("reference cache: bad number '" + token + "'");
    }
    return v;
}

void expect(std::istream& in, const std::string& word) {
    std::string token;
    if (!(in >> token) || token != word) {
        throw std::runtime_error("reference cache: expected '" + word + "'");
    }
}

std::optional<ReferenceSolution> read_cache(const std::filesystem::path& file, std::uint64_t key,
                                            Eigen::Index n, Eigen::Index big_n) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    in.imbue(std::locale::classic());
    ReferenceSolution out;
    int version = 0;
    std::string key_text;
    Eigen::Index fn = 0;
    Eigen::Index fbig = 0;
    int conv = 0;
    expect(in, "dwifob-reference");
    in >> version;
    expect(in, "key");
    in >> key_text;
    expect(in, "dims");
    in >> fn >> fbig;
    expect(in, "iterations");
    in >> out.iterations;
    expect(in, "converged");
    in >> conv;
    if (!in || version != 1 || key_text != hex_key(key) || fn != n || fbig != big_n) {
        return std::nullopt;
    }
    out.converged = conv != 0;
    expect(in, "dx");
    out.last_dx = read_hex(in);
    expect(in, "dmu");
    out.last_dmu = read_hex(in);
    out.z.x.resize(n);
    out.z.mu.resize(big_n);
    for (Eigen::Index i = 0; i < n; ++i) out.z.x[i] = read_hex(in);
    for (Eigen::Index i = 0; i < big_n; ++i) out.z.mu[i] = read_hex(in);
    out.from_cache = true;
    out.cache_file = file;
    return out;
}

void write_cache(const std::filesystem::path& file, std::uint64_t key,
                 const ReferenceSolution& ref) {
    const auto tmp = file.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out.imbue(std::locale::classic());
        out << "dwifob-reference 1\n"
            << "key " << hex_key(key) << '\n'
            << "dims " << ref.z.x.size() << ' ' << ref.z.mu.size() << '\n'
            << "iterations " << ref.iterations << '\n'
            << "converged " << (ref.converged ? 1 : 0) << '\n'
            << "dx ";
        write_hex(out, ref.last_dx);
        out << "\ndmu ";
        write_hex(out, ref.last_dmu);
        out << '\n';
        for (Eigen::Index i = 0; i < ref.z.x.size(); ++i) {
            write_hex(out, ref.z.x[i]);
            out << '\n';
        }
        for (Eigen::Index i = 0; i < ref.z.mu.size(); ++i) {
            write_hex(out, ref.z.mu[i]);
            out << '\n';
        }
        if (!out.flush()) throw std::runtime_error("cannot write " + tmp);
    }
    std::filesystem::rename(tmp, file);
}

}  // namespace

LibsvmParseError::LibsvmParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

SvmDataset parse_libsvm(std::istream& in) {
    std::vector<RawSample> samples;
    std::map<double, std::size_t> classes;  // label -> first line seen
    Eigen::Index max_index = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view(line);
        if (const auto hash = view.find('#'); hash != std::string_view::npos) {
            view = view.substr(0, hash);
        }
        const auto tokens = split_ws(view);
        if (tokens.empty()) continue;

        RawSample s{0.0, lineno, {}};
        if (!parse_double(tokens[0], s.label)) {
            throw LibsvmParseError(lineno, "malformed label '" + std::string(tokens[0]) + "'");
        }
        long long prev = 0;
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const auto tok = tokens[t];
            const auto colon = tok.find(':');
            long long idx = 0;
            double val = 0.0;
            if (colon == std::string_view::npos || !parse_index(tok.substr(0, colon), idx) ||
                !parse_double(tok.substr(colon + 1), val)) {
                throw LibsvmParseError(lineno, "malformed feature '" + std::string(tok) + "'");
            }
            if (idx < 1) throw LibsvmParseError(lineno, "feature index must be >= 1");
            if (idx <= prev) {
                throw LibsvmParseError(lineno, "feature indices must be strictly ascending");
            }
            prev = idx;
            s.entries.emplace_back(static_cast<Eigen::Index>(idx - 1), val);
            max_index = std::max<Eigen::Index>(max_index, idx);
        }
        if (classes.emplace(s.label, lineno).second && classes.size() > 2) {
            throw LibsvmParseError(lineno, "more than two label classes");
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw LibsvmParseError(lineno, "no samples");
    if (max_index < 1) throw LibsvmParseError(lineno, "no features");

    double negative_label = 0.0;
    if (classes.size() == 2) {
        negative_label = classes.begin()->first;
    } else if (classes.begin()->first == 0.0) {
        throw LibsvmParseError(classes.begin()->second, "a single label class must be nonzero");
    }

    SvmDataset data;
    data.phi.resize(static_cast<Eigen::Index>(samples.size()));
    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double label = samples[i].label;
        data.phi[row] = classes.size() == 2 ? (label == negative_label ? -1.0 : 1.0)
                                            : (label > 0.0 ? 1.0 : -1.0);
        for (const auto& [col, val] : samples[i].entries) {
            if (val != 0.0) triplets.push_back({row, col, val});
        }
    }
    data.theta = sparse_from_triplets(data.phi.size(), max_index, triplets);
    return data;
}

SvmDataset parse_libsvm_string(const std::string& text) {
    std::istringstream in(text);
    return parse_libsvm(in);
}

SvmDataset load_libsvm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    return parse_libsvm(in);
}

std::string serialize_libsvm(const SvmDataset& data) {
    std::string out;
    for (Eigen::Index i = 0; i < data.samples(); ++i) {
        out += data.phi[i] > 0.0 ? "+1" : "-1";
        for (SparseMatrix::InnerIterator it(data.theta, i); it; ++it) {
            if (it.value() == 0.0) continue;
            out += ' ';
            out += std::to_string(it.col() + 1);
            out += ':';
            out += shortest(it.value());
        }
        out += '\n';
    }
    return out;
}

std::uint64_t dataset_hash(const SvmDataset& data) {
    Fnv1a h;
    h.value(static_cast<std::int64_t>(data.samples()));
    h.value(static_cast<std::int64_t>(data.features()));
    for (Eigen::Index i = 0; i < data.samples(); ++i) {
        h.value(data.phi[i]);
        for (SparseMatrix::InnerIterator it(data.theta, i); it; ++it) {
            h.value(static_cast<std::int64_t>(it.col()));
            h.value(it.value());
        }
        h.value(std::int64_t{-1});
    }
    return h.digest();
}

SparseMatrix design_matrix(const SvmDataset& data) {
    const Eigen::Index n = data.samples();
    const Eigen::Index d = data.features();
    require_same_size(data.phi.size(), n, "design_matrix (labels)");
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(data.theta.nonZeros() + n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double phi = data.phi[i];
        for (SparseMatrix::InnerIterator it(data.theta, i); it; ++it) {
            triplets.push_back({i, it.col(), phi * it.value()});
        }
        triplets.push_back({i, d, phi});
    }
    return sparse_from_triplets(n, d + 1, triplets);
}

LinearOperator build_design_matrix(const SvmDataset& data) {
    return LinearOperator::from_sparse(design_matrix(data));
}

SvmProblem assemble_problem(SvmDataset dataset, double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw std::invalid_argument("assemble_problem: delta must be > 0");
    }
    SvmProblem p;
    p.delta = delta;
    p.design = design_matrix(dataset);
    p.op = LinearOperator::from_sparse(p.design);
    p.dataset = std::move(dataset);
    p.pd.op = p.op;
    p.pd.resolvent_a = l1_resolvent(delta);
    p.pd.resolvent_b_conj = hinge_conjugate_resolvent();
    p.pd.c = CocoerciveOperator::zero();
    return p;
}

double OptimalityReport::max() const { return std::max({primal, dual, box}); }

OptimalityReport check_optimality(const SvmProblem& problem, const PrimalDualPoint& z,
                                  double zero_tol) {
    const Eigen::Index d = problem.op.cols() - 1;
    require_same_size(z.x.size(), problem.op.cols(), "check_optimality (x)");
    require_same_size(z.mu.size(), problem.op.rows(), "check_optimality (mu)");
    const double delta = problem.delta;
    const Vector lt_mu = problem.op.adjoint(z.mu);
    const Vector lx = problem.op.apply(z.x);

    OptimalityReport rep;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double g = -lt_mu[j];
        double r;
        if (z.x[j] > zero_tol) {
            r = std::abs(g - delta);
        } else if (z.x[j] < -zero_tol) {
            r = std::abs(g + delta);
        } else {
            r = std::max(0.0, std::abs(g) - delta);
        }
        rep.primal = std::max(rep.primal, r);
    }
    rep.primal = std::max(rep.primal, std::abs(lt_mu[d]));

    for (Eigen::Index i = 0; i < z.mu.size(); ++i) {
        const double mu = z.mu[i];
        const double s = lx[i];
        rep.box = std::max({rep.box, mu - 0.0, -1.0 - mu});
        double r;
        if (mu >= -zero_tol) {
            r = std::max(0.0, 1.0 - s);
        } else if (mu <= -1.0 + zero_tol) {
            r = std::max(0.0, s - 1.0);
        } else {
            r = std::abs(s - 1.0);
        }
        rep.dual = std::max(rep.dual, r);
    }
    rep.box = std::max(0.0, rep.box);
    return rep;
}

std::uint64_t reference_key(const SvmProblem& problem, const PdMetric& metric) {
    Fnv1a h;
    h.value(dataset_hash(problem.dataset));
    h.value(problem.delta);
    h.value(metric.tau());
    h.value(metric.sigma());
    return h.digest();
}

ReferenceSolution compute_reference_solution(const SvmProblem& problem, const PdMetric& metric,
                                             const ReferenceOptions& options) {
    const Eigen::Index n = problem.op.cols();
    const Eigen::Index big_n = problem.op.rows();
    const std::uint64_t key = reference_key(problem, metric);

    auto solve = [&] {
        CpOptions cp;
        cp.max_iters = options.max_iters;
        cp.successive_tol = options.successive_tol;
        const PrimalDualPoint z0{Vector::Zero(n), Vector::Zero(big_n)};
        CpTrace t = run_cp(problem.pd, metric, z0, cp);
        ReferenceSolution ref;
        ref.z = std::move(t.z);
        ref.iterations = t.iterations;
        ref.last_dx = t.last_dx;
        ref.last_dmu = t.last_dmu;
        ref.converged = t.status == RunStatus::converged;
        return ref;
    };

    if (options.cache_dir.empty()) return solve();

    std::filesystem::create_directories(options.cache_dir);
    const auto base = options.cache_dir / ("ref-" + hex_key(key));
    const auto file = std::filesystem::path(base.string() + ".txt");
    FileLock lock(base.string() + ".lock");
    std::optional<ReferenceSolution> cached;
    try {
        cached = read_cache(file, key, n, big_n);
    } catch (const std::exception&) {
        // Truncated or foreign file: recompute and overwrite it.
        cached.reset();
    }
    if (cached) return *cached;
    ReferenceSolution ref = solve();
    write_cache(file, key, ref);
    ref.cache_file = file;
    return ref;
}

}  // namespace dwifob
