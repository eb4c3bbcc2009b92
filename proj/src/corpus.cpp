#include "brainaug/corpus.hpp"

#include "brainaug/io.hpp"
#include "brainaug/rng.hpp"
#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace brainaug::corpus {

TokenList tokenize(const std::string& text) {
    TokenList out;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<TrFrame> split_into_sentence_frames(const std::string& text) {
    std::vector<TrFrame> frames;
    std::string sentence;
    auto flush = [&]() {
        TokenList toks = tokenize(sentence);
        sentence.clear();
        if (toks.empty()) return;
        TrFrame f;
        f.index = static_cast<int>(frames.size());
        f.tokens = std::move(toks);
        frames.push_back(std::move(f));
    };
    for (char ch : text) {
        if (ch == '.' || ch == '?' || ch == '!') {
            flush();
        } else {
            sentence.push_back(ch);
        }
    }
    flush();
    return frames;
}

std::vector<TrFrame> load_frames_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<TrFrame> frames;
    std::string line;
    int index = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            index = 0;  // blank line = session break
            continue;
        }
        TrFrame f;
        f.index = index++;
        f.tokens = tokenize(line);
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<TrFrame> load_frames_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<TrFrame> frames;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        TrFrame f;
        f.index = j.at("frame").get<int>();
        f.tokens = tokenize(j.at("text").get<std::string>());
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<TokenizedDocument> segment_documents(const std::vector<TrFrame>& frames,
                                                 int frames_per_doc) {
    if (frames_per_doc < 2) throw std::invalid_argument("frames_per_doc must be >= 2");
    if (static_cast<int>(frames.size()) < frames_per_doc / 2)
        throw std::runtime_error("insufficient stream");

    std::vector<TokenizedDocument> docs;
    std::size_t pos = 0;
    while (pos < frames.size()) {
        const std::size_t remaining = frames.size() - pos;
        std::size_t take;
        if (remaining >= static_cast<std::size_t>(frames_per_doc)) {
            take = static_cast<std::size_t>(frames_per_doc);
        } else if (remaining * 2 >= static_cast<std::size_t>(frames_per_doc)) {
            take = remaining;  // short final document
        } else {
            break;  // drop the tail
        }
        TokenizedDocument doc;
        doc.doc_id = "d" + std::to_string(docs.size());
        for (std::size_t i = 0; i < take; ++i) {
            doc.frames.push_back(frames[pos + i]);
            doc.tokens.insert(doc.tokens.end(), frames[pos + i].tokens.begin(),
                              frames[pos + i].tokens.end());
        }
        pos += take;
        docs.push_back(std::move(doc));
    }
    return docs;
}

namespace {

QuerySample make_sample(const TokenizedDocument& doc, std::size_t span_begin,
                        std::size_t query_len, std::size_t cont_len, std::size_t counter) {
    QuerySample s;
    s.sample_id = doc.doc_id + "_q" + std::to_string(counter);
    s.relevant_doc = doc.doc_id;
    s.query_offset = span_begin;
    s.query.assign(doc.tokens.begin() + static_cast<std::ptrdiff_t>(span_begin),
                   doc.tokens.begin() + static_cast<std::ptrdiff_t>(span_begin + query_len));
    s.continuation.assign(
        doc.tokens.begin() + static_cast<std::ptrdiff_t>(span_begin + query_len),
        doc.tokens.begin() + static_cast<std::ptrdiff_t>(span_begin + query_len + cont_len));
    s.masked_doc.assign(doc.tokens.begin(),
                        doc.tokens.begin() + static_cast<std::ptrdiff_t>(span_begin));
    s.masked_doc.insert(s.masked_doc.end(),
                        doc.tokens.begin() + static_cast<std::ptrdiff_t>(span_begin + query_len),
                        doc.tokens.end());
    s.brain_ref = s.sample_id;
    return s;
}

}  // namespace

std::vector<QuerySample> extract_ict_sentence_style(const TokenizedDocument& doc, int* skipped) {
    std::vector<QuerySample> samples;
    std::size_t offset = 0;
    std::size_t counter = 0;
    int skip_count = 0;
    for (const TrFrame& frame : doc.frames) {
        const std::size_t len = frame.tokens.size();
        if (len < 3) {
            ++skip_count;
            offset += len;
            continue;
        }
        const std::size_t third = len / 3;
        samples.push_back(make_sample(doc, offset, third, third, counter++));
        samples.push_back(make_sample(doc, offset, 2 * third, len - 2 * third, counter++));
        offset += len;
    }
    if (skipped) *skipped = skip_count;
    return samples;
}

std::vector<QuerySample> extract_ict_sliding(const TokenizedDocument& doc, int window_trs,
                                             int* skipped) {
    if (window_trs < 1 || window_trs > 3)
        throw std::invalid_argument("window_trs must be in [1, 3]");
    std::vector<QuerySample> samples;
    int skip_count = 0;

    // token offset of each frame within the document
    std::vector<std::size_t> frame_offset(doc.frames.size());
    std::size_t acc = 0;
    for (std::size_t i = 0; i < doc.frames.size(); ++i) {
        frame_offset[i] = acc;
        acc += doc.frames[i].tokens.size();
    }

    std::size_t counter = 0;
    for (std::size_t i = static_cast<std::size_t>(window_trs); i < doc.frames.size(); ++i) {
        const std::size_t q_begin = frame_offset[i - static_cast<std::size_t>(window_trs)];
        const std::size_t q_len = frame_offset[i] - q_begin;
        const std::size_t c_len = doc.frames[i].tokens.size();
        if (q_len == 0 || c_len == 0) {
            ++skip_count;
            continue;
        }
        samples.push_back(make_sample(doc, q_begin, q_len, c_len, counter++));
    }
    if (skipped) *skipped = skip_count;
    return samples;
}

std::vector<FoldSplit> split_folds(std::vector<QuerySample>& samples,
                                   const std::vector<TokenizedDocument>& docs, int n_folds,
                                   std::uint64_t seed) {
    if (n_folds < 2) throw std::invalid_argument("n_folds must be >= 2");
    if (static_cast<int>(docs.size()) < n_folds)
        throw std::runtime_error("fewer documents than folds");

    std::vector<std::string> doc_ids;
    doc_ids.reserve(docs.size());
    for (const auto& d : docs) doc_ids.push_back(d.doc_id);
    Rng rng(seed);
    rng.shuffle(doc_ids);

    std::map<std::string, int> doc_fold;
    for (std::size_t i = 0; i < doc_ids.size(); ++i)
        doc_fold[doc_ids[i]] = static_cast<int>(i % static_cast<std::size_t>(n_folds));

    for (auto& s : samples) {
        auto it = doc_fold.find(s.relevant_doc);
        if (it == doc_fold.end())
            throw std::runtime_error("sample references unknown document: " + s.relevant_doc);
        s.fold = it->second;
    }

    std::vector<FoldSplit> splits(static_cast<std::size_t>(n_folds));
    for (int f = 0; f < n_folds; ++f) {
        const int val_fold = (f + 1) % n_folds;
        for (const auto& s : samples) {
            if (s.fold == f) {
                splits[static_cast<std::size_t>(f)].test.push_back(s.sample_id);
            } else if (s.fold == val_fold) {
                splits[static_cast<std::size_t>(f)].validation.push_back(s.sample_id);
            } else {
                splits[static_cast<std::size_t>(f)].train.push_back(s.sample_id);
            }
        }
    }
    return splits;
}

TokenList sample_query_terms(const TokenList& query, int k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (static_cast<int>(query.size()) <= k) return query;
    std::vector<std::size_t> idx(query.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    TokenList out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(query[i]);
    return out;
}

std::string documents_to_jsonl(const std::vector<TokenizedDocument>& docs) {
    std::ostringstream out;
    for (const auto& d : docs) {
        nlohmann::json j;
        j["doc_id"] = d.doc_id;
        j["tokens"] = d.tokens;
        auto frames = nlohmann::json::array();
        for (const auto& f : d.frames) frames.push_back({{"frame", f.index}, {"tokens", f.tokens}});
        j["frames"] = frames;
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<TokenizedDocument> documents_from_jsonl(const std::string& text) {
    std::vector<TokenizedDocument> docs;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        TokenizedDocument d;
        d.doc_id = j.at("doc_id").get<std::string>();
        d.tokens = j.at("tokens").get<TokenList>();
        for (const auto& fj : j.at("frames")) {
            TrFrame f;
            f.index = fj.at("frame").get<int>();
            f.tokens = fj.at("tokens").get<TokenList>();
            d.frames.push_back(std::move(f));
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

std::string samples_to_jsonl(const std::vector<QuerySample>& samples) {
    std::ostringstream out;
    for (const auto& s : samples) {
        nlohmann::json j;
        j["sample_id"] = s.sample_id;
        j["query"] = s.query;
        j["continuation"] = s.continuation;
        j["relevant_doc"] = s.relevant_doc;
        j["query_offset"] = s.query_offset;
        j["brain_ref"] = s.brain_ref;
        j["fold"] = s.fold;
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<QuerySample> samples_from_jsonl(const std::string& text) {
    std::vector<QuerySample> samples;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        QuerySample s;
        s.sample_id = j.at("sample_id").get<std::string>();
        s.query = j.at("query").get<TokenList>();
        s.continuation = j.at("continuation").get<TokenList>();
        s.relevant_doc = j.at("relevant_doc").get<std::string>();
        s.query_offset = j.at("query_offset").get<std::size_t>();
        s.brain_ref = j.at("brain_ref").get<std::string>();
        s.fold = j.at("fold").get<int>();
        samples.push_back(std::move(s));
    }
    return samples;
}

void rebind_masked_docs(std::vector<QuerySample>& samples,
                        const std::vector<TokenizedDocument>& docs) {
    std::map<std::string, const TokenizedDocument*> by_id;
    for (const auto& d : docs) by_id[d.doc_id] = &d;
    for (auto& s : samples) {
        auto it = by_id.find(s.relevant_doc);
        if (it == by_id.end())
            throw std::runtime_error("sample references unknown document: " + s.relevant_doc);
        const TokenList& toks = it->second->tokens;
        s.masked_doc.assign(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(s.query_offset));
        s.masked_doc.insert(
            s.masked_doc.end(),
            toks.begin() + static_cast<std::ptrdiff_t>(s.query_offset + s.query.size()),
            toks.end());
    }
}

}  // namespace brainaug::corpus

