#include "latentmol/oracle.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace latentmol {

OracleSpec OracleSpec::make_builtin(const std::string& name) {
    OracleSpec s;
    s.name = name;
    if (name == "pseudoSA") s.builtin = BuiltinOracle::PseudoSa;
    else if (name == "pseudoQED") s.builtin = BuiltinOracle::PseudoQed;
    else if (name == "heavy_atoms") s.builtin = BuiltinOracle::HeavyAtoms;
    else if (name == "ring_count") s.builtin = BuiltinOracle::RingCount;
    else throw UnknownProperty("no builtin oracle named " + name);
    return s;
}

OracleSpec OracleSpec::make_external(const std::string& name, const std::string& command,
                                     int batch_size, double timeout_sec) {
    if (command.empty()) throw BadObjective("external oracle command must be non-empty");
    OracleSpec s;
    s.name = name;
    s.external = true;
    s.command = command;
    s.batch_size = std::max(1, batch_size);
    s.timeout_sec = timeout_sec;
    return s;
}

double pseudo_sa(const MolGraph& g) {
    DescriptorVector d = descriptors(g);
    double v = 1.0 + 0.3 * d.ring_count + 0.08 * d.heavy_atoms + 0.5 * d.branch_index;
    return std::clamp(v, 1.0, 10.0);
}

double pseudo_qed(const MolGraph& g) {
    DescriptorVector d = descriptors(g);
    double a = d.heavy_atoms - 23.0;
    double r = d.ring_count - 2.0;
    return std::exp(-a * a / 200.0) * std::exp(-r * r / 8.0);
}

namespace {

// Runs one batch through a fresh child process: write one canonical string
// per line, read one reply per line, same order.
ScoreResult run_external_batch(const OracleSpec& spec, const std::vector<std::string>& lines) {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw OracleUnavailable("pipe failed: " + std::string(strerror(errno)));

    pid_t pid = fork();
    if (pid < 0) throw OracleUnavailable("fork failed: " + std::string(strerror(errno)));
    if (pid == 0) {
        setpgid(0, 0);  // own group, so a timeout kill reaps sh's children too
        dup2(in_pipe[0], 0);
        dup2(out_pipe[1], 1);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", spec.command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);

    std::string input;
    for (const std::string& l : lines) input += l + "\n";
    size_t written = 0;
    // The child may not consume input until it has produced output; keep the
    // write non-blocking and interleave with reads.
    fcntl(in_pipe[1], F_SETFL, O_NONBLOCK);
    fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);

    std::string output;
    bool timed_out = false;
    bool write_done = input.empty();
    if (write_done) close(in_pipe[1]);
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<long>(spec.timeout_sec * 1000));
    while (true) {
        if (std::chrono::steady_clock::now() >= deadline) {
            timed_out = true;
            break;
        }
        struct pollfd fds[2];
        int nfds = 0;
        fds[nfds].fd = out_pipe[0];
        fds[nfds].events = POLLIN;
        ++nfds;
        if (!write_done) {
            fds[nfds].fd = in_pipe[1];
            fds[nfds].events = POLLOUT;
            ++nfds;
        }
        int rc = poll(fds, nfds, 200);
        if (rc < 0 && errno != EINTR) break;
        if (rc > 0 && (fds[0].revents & (POLLIN | POLLHUP))) {
            char buf[4096];
            ssize_t n = read(out_pipe[0], buf, sizeof buf);
            if (n > 0) output.append(buf, static_cast<size_t>(n));
            else if (n == 0) break;
        }
        if (!write_done && rc > 0 && nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR))) {
            if (fds[1].revents & POLLERR) {
                write_done = true;
                close(in_pipe[1]);
            } else {
                ssize_t n = write(in_pipe[1], input.data() + written, input.size() - written);
                if (n > 0) written += static_cast<size_t>(n);
                if (written == input.size()) {
                    write_done = true;
                    close(in_pipe[1]);
                }
            }
        }
    }
    if (!write_done) close(in_pipe[1]);
    close(out_pipe[0]);

    int status = 0;
    if (timed_out) {
        kill(-pid, SIGKILL);
        kill(pid, SIGKILL);
        waitpid(pid, &status, 0);
        ScoreResult r;
        r.values.assign(lines.size(), 0.0);
        r.failures = static_cast<long>(lines.size());
        return r;
    }
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw OracleUnavailable("oracle command failed (" + spec.command + "), exit status " +
                                std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));

    ScoreResult r;
    std::istringstream is(output);
    std::string line;
    while (std::getline(is, line) && r.values.size() < lines.size()) {
        try {
            size_t pos = 0;
            double v = std::stod(line, &pos);
            if (!std::isfinite(v)) throw std::invalid_argument("nan");
            r.values.push_back(v);
        } catch (const std::exception&) {
            r.values.push_back(0.0);
            ++r.failures;
        }
    }
    while (r.values.size() < lines.size()) {
        r.values.push_back(0.0);
        ++r.failures;
    }
    return r;
}

}  // namespace

ScoreResult score(const OracleSpec& spec, const std::vector<MolGraph>& molecules) {
    ScoreResult r;
    if (!spec.external) {
        for (const MolGraph& g : molecules) {
            switch (spec.builtin) {
                case BuiltinOracle::PseudoSa: r.values.push_back(pseudo_sa(g)); break;
                case BuiltinOracle::PseudoQed: r.values.push_back(pseudo_qed(g)); break;
                case BuiltinOracle::HeavyAtoms:
                    r.values.push_back(static_cast<double>(descriptors(g).heavy_atoms));
                    break;
                case BuiltinOracle::RingCount:
                    r.values.push_back(static_cast<double>(descriptors(g).ring_count));
                    break;
            }
        }
        return r;
    }
    for (size_t off = 0; off < molecules.size(); off += spec.batch_size) {
        size_t end = std::min(molecules.size(), off + spec.batch_size);
        std::vector<std::string> lines;
        for (size_t i = off; i < end; ++i) lines.push_back(canonical_string(molecules[i]));
        ScoreResult batch = run_external_batch(spec, lines);
        r.values.insert(r.values.end(), batch.values.begin(), batch.values.end());
        r.failures += batch.failures;
    }
    return r;
}

std::vector<PropertyVector> score_all(const std::vector<OracleSpec>& specs,
                                      const std::vector<MolGraph>& molecules, long* failures) {
    std::vector<PropertyVector> out(molecules.size());
    long fail = 0;
    for (const OracleSpec& spec : specs) {
        ScoreResult r = score(spec, molecules);
        fail += r.failures;
        for (size_t i = 0; i < molecules.size(); ++i) out[i][spec.name] = r.values[i];
    }
    if (failures) *failures = fail;
    return out;
}

double objective_value(const PropertyVector& props, const Objective& objective) {
    if (objective.empty()) throw BadObjective("objective must have at least one term");
    double v = 0.0;
    for (const ObjectiveTerm& term : objective) {
        auto it = props.find(term.property);
        if (it == props.end()) throw UnknownProperty("objective names absent property: " +
                                                     term.property);
        v += term.weight * (term.maximize ? -1.0 : 1.0) * it->second;
    }
    return v;
}

}  // namespace latentmol
