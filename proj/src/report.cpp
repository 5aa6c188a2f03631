#include "redgan/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace redgan {

namespace fs = std::filesystem;

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << text;
    if (!os) throw IoError("failed writing " + path);
}

std::string read_text(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string preamble(const ExperimentReport& rep)
{
    std::string s = "# fingerprint=" + rep.fingerprint + "\n# pairing=" + rep.pairing + "\n";
    for (const auto& f : rep.failures) s += "# failed " + f + "\n";
    return s;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_num(const std::string& s, const std::string& where)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw FormatError(where + ": bad number '" + s + "'");
}

} // namespace

std::string report_csv(const ExperimentReport& rep)
{
    std::string s = preamble(rep) + "condition,fold,global_class,n_test,dice_mean,dice_std\n";
    for (const auto& c : rep.cells) {
        s += c.condition + "," + std::to_string(c.fold) + "," + std::to_string(c.global_class) + "," +
             std::to_string(c.n_test) + ",";
        s += c.failed ? "NA,NA\n" : num(c.dice_mean) + "," + num(c.dice_std) + "\n";
    }
    return s;
}

std::string wilcoxon_csv(const ExperimentReport& rep)
{
    std::string s = preamble(rep) + "condition,global_class,wilcoxon_W,p_two_sided\n";
    for (const auto& t : rep.tests)
        s += t.condition + "," + std::to_string(t.global_class) + "," + num(t.w) + "," + num(t.p_two_sided) + "\n";
    return s;
}

void write_report(const std::string& dir, const ExperimentReport& rep)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    write_text((fs::path(dir) / "report.csv").string(), report_csv(rep));
    write_text((fs::path(dir) / "wilcoxon.csv").string(), wilcoxon_csv(rep));
}

ExperimentReport read_report(const std::string& dir)
{
    ExperimentReport rep;
    rep.failures.clear();
    auto parse = [&](const std::string& path, const std::string& header, auto&& row) {
        std::istringstream is(read_text(path));
        std::string line;
        std::size_t lineno = 0;
        bool seen_header = false;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string where = path + ":" + std::to_string(lineno);
            if (line.rfind("# fingerprint=", 0) == 0) {
                rep.fingerprint = line.substr(14);
            } else if (line.rfind("# pairing=", 0) == 0) {
                rep.pairing = line.substr(10);
            } else if (line.rfind("# failed ", 0) == 0) {
                if (header.find("dice_mean") != std::string::npos) rep.failures.push_back(line.substr(9));
            } else if (!seen_header) {
                if (line != header) throw FormatError(where + ": expected header '" + header + "'");
                seen_header = true;
            } else if (!line.empty()) {
                row(split_csv(line), where);
            }
        }
        if (!seen_header) throw FormatError(path + ": missing header");
    };
    parse((fs::path(dir) / "report.csv").string(), "condition,fold,global_class,n_test,dice_mean,dice_std",
          [&](const std::vector<std::string>& f, const std::string& where) {
              if (f.size() != 6) throw FormatError(where + ": expected 6 fields");
              ReportCell c;
              c.condition = f[0];
              c.fold = static_cast<std::size_t>(parse_num(f[1], where));
              c.global_class = static_cast<int>(parse_num(f[2], where));
              c.n_test = static_cast<std::size_t>(parse_num(f[3], where));
              if (f[4] == "NA") {
                  c.failed = true;
              } else {
                  c.dice_mean = parse_num(f[4], where);
                  c.dice_std = parse_num(f[5], where);
              }
              if (std::find(rep.conditions.begin(), rep.conditions.end(), c.condition) == rep.conditions.end())
                  rep.conditions.push_back(c.condition);
              rep.n_folds = std::max(rep.n_folds, c.fold + 1);
              rep.n_classes = std::max(rep.n_classes, static_cast<std::size_t>(c.global_class) + 1);
              rep.cells.push_back(c);
          });
    parse((fs::path(dir) / "wilcoxon.csv").string(), "condition,global_class,wilcoxon_W,p_two_sided",
          [&](const std::vector<std::string>& f, const std::string& where) {
              if (f.size() != 4) throw FormatError(where + ": expected 4 fields");
              rep.tests.push_back(WilcoxonRow{f[0], static_cast<int>(parse_num(f[1], where)),
                                              parse_num(f[2], where), parse_num(f[3], where)});
          });
    return rep;
}

std::string dice_svg(const ExperimentReport& rep)
{
    const std::size_t K = rep.n_classes, M = rep.conditions.size();
    const double bar = 22, gap = 30, left = 60, top = 40, height = 240;
    const double group = static_cast<double>(M) * bar + gap;
    const double width = left + static_cast<double>(K) * group + 180;
    static const char* palette[] = {"#9e9e9e", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 60
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<text x=\"" << left << "\" y=\"20\">Mean test Dice per global class</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + height << "\" x2=\"" << left + static_cast<double>(K) * group
       << "\" y2=\"" << top + height << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double y = top + height - height * t / 4.0;
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(t / 4.0)
           << "</text>\n";
    }
    for (std::size_t c = 0; c < K; ++c) {
        const double gx = left + static_cast<double>(c) * group + gap / 2;
        for (std::size_t m = 0; m < M; ++m) {
            double acc = 0;
            std::size_t n = 0;
            for (const auto& cell : rep.cells)
                if (cell.condition == rep.conditions[m] && cell.global_class == static_cast<int>(c) && !cell.failed &&
                    cell.n_test > 0) {
                    acc += cell.dice_mean;
                    ++n;
                }
            const double v = n ? acc / static_cast<double>(n) : 0.0;
            const double h = height * std::clamp(v, 0.0, 1.0);
            os << "<rect class=\"bar\" data-condition=\"" << rep.conditions[m] << "\" data-class=\"" << c
               << "\" data-dice=\"" << num(v) << "\" x=\"" << gx + static_cast<double>(m) * bar << "\" y=\""
               << top + height - h << "\" width=\"" << bar - 2 << "\" height=\"" << h << "\" fill=\""
               << palette[m % 6] << "\"/>\n";
        }
        os << "<text x=\"" << gx + static_cast<double>(M) * bar / 2 << "\" y=\"" << top + height + 18
           << "\" text-anchor=\"middle\">class " << c << "</text>\n";
    }
    const double lx = left + static_cast<double>(K) * group + 20;
    for (std::size_t m = 0; m < M; ++m) {
        const double y = top + 20.0 * static_cast<double>(m);
        os << "<rect x=\"" << lx << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\"" << palette[m % 6]
           << "\"/><text x=\"" << lx + 18 << "\" y=\"" << y + 10 << "\">" << rep.conditions[m] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_dice_svg(const std::string& path, const ExperimentReport& rep) { write_text(path, dice_svg(rep)); }

void write_seg_trace(const std::string& path, const std::vector<double>& epoch_loss)
{
    std::string s = "epoch,loss\n";
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) s += std::to_string(i) + "," + num(epoch_loss[i]) + "\n";
    write_text(path, s);
}

void write_gan_trace(const std::string& path, const std::vector<GanStepLog>& trace)
{
    std::string s = "step,d_hinge,g_hinge,feature_matching,g_total\n";
    for (const auto& r : trace)
        s += std::to_string(r.step) + "," + num(r.d_loss) + "," + num(r.g_hinge) + "," + num(r.feature_matching) +
             "," + num(r.g_total) + "\n";
    write_text(path, s);
}

} // namespace redgan
