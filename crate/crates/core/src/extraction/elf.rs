//! Minimal ELF reader: section headers, string literals from data sections,
//! and exported function symbols.
//!
//! Handles ELF32 and ELF64 in either byte order. Nothing beyond the section
//! header table, the symbol tables and their string tables is interpreted.

use std::collections::{BTreeMap, BTreeSet};

use super::strings::{scan_strings, ExtractOptions};
use super::{BinaryFeatureSet, StringLiteral};
use crate::error::{Error, Result};

const SHT_PROGBITS: u32 = 1;
const SHT_SYMTAB: u32 = 2;
const SHT_NOBITS: u32 = 8;
const SHT_DYNSYM: u32 = 11;

const SHF_ALLOC: u64 = 0x2;
const SHF_EXECINSTR: u64 = 0x4;

const STT_FUNC: u8 = 2;
const STT_GNU_IFUNC: u8 = 10;
const STB_GLOBAL: u8 = 1;
const STB_WEAK: u8 = 2;
const STB_GNU_UNIQUE: u8 = 10;
const STV_DEFAULT: u8 = 0;
const STV_PROTECTED: u8 = 3;

const SHN_UNDEF: u16 = 0;
const SHN_XINDEX: u16 = 0xffff;

#[derive(Clone, Copy)]
struct Reader<'a> {
    data: &'a [u8],
    is64: bool,
    big_endian: bool,
}

impl<'a> Reader<'a> {
    fn len(&self) -> u64 {
        self.data.len() as u64
    }

    fn slice(&self, what: &str, offset: u64, size: u64) -> Result<&'a [u8]> {
        let end = offset.checked_add(size);
        match end {
            Some(end) if end <= self.len() => Ok(&self.data[offset as usize..end as usize]),
            _ => Err(Error::ElfTruncated {
                what: what.to_string(),
                offset,
                size,
                len: self.len(),
            }),
        }
    }

    fn bytes<const N: usize>(&self, offset: u64) -> Result<[u8; N]> {
        let s = self.slice("field", offset, N as u64)?;
        let mut out = [0u8; N];
        out.copy_from_slice(s);
        if self.big_endian {
            out.reverse();
        }
        Ok(out)
    }

    fn u16(&self, offset: u64) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(offset)?))
    }

    fn u32(&self, offset: u64) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(offset)?))
    }

    fn u64(&self, offset: u64) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(offset)?))
    }

    /// Address-sized field: 4 bytes in ELF32, 8 in ELF64.
    fn word(&self, offset: u64) -> Result<u64> {
        if self.is64 {
            self.u64(offset)
        } else {
            self.u32(offset).map(u64::from)
        }
    }
}

#[derive(Debug, Clone)]
struct Section {
    name_index: u32,
    name: String,
    kind: u32,
    flags: u64,
    offset: u64,
    size: u64,
    link: u32,
    entsize: u64,
    header_offset: u64,
}

struct ElfFile<'a> {
    reader: Reader<'a>,
    sections: Vec<Section>,
}

impl<'a> ElfFile<'a> {
    fn parse(data: &'a [u8]) -> Result<Self> {
        if data.len() < 16 {
            return Err(Error::ElfTruncated {
                what: "identification".into(),
                offset: 0,
                size: 16,
                len: data.len() as u64,
            });
        }
        if &data[..4] != b"\x7fELF" {
            return Err(Error::ElfParse {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let is64 = match data[4] {
            1 => false,
            2 => true,
            other => {
                return Err(Error::ElfParse {
                    offset: 4,
                    reason: format!("unknown class {other}"),
                })
            }
        };
        let big_endian = match data[5] {
            1 => false,
            2 => true,
            other => {
                return Err(Error::ElfParse {
                    offset: 5,
                    reason: format!("unknown data encoding {other}"),
                })
            }
        };
        if data[6] != 1 {
            return Err(Error::ElfParse {
                offset: 6,
                reason: format!("unsupported ident version {}", data[6]),
            });
        }
        let reader = Reader { data, is64, big_endian };
        let header_size = if is64 { 64 } else { 52 };
        reader.slice("file header", 0, header_size)?;

        let (shoff_at, shentsize_at, shnum_at, shstrndx_at) = if is64 {
            (0x28, 0x3a, 0x3c, 0x3e)
        } else {
            (0x20, 0x2e, 0x30, 0x32)
        };
        let shoff = reader.word(shoff_at)?;
        let shentsize = reader.u16(shentsize_at)? as u64;
        let mut shnum = reader.u16(shnum_at)? as u64;
        let mut shstrndx = reader.u16(shstrndx_at)? as u64;

        if shoff == 0 {
            return Ok(Self {
                reader,
                sections: Vec::new(),
            });
        }
        let min_entsize = if is64 { 64 } else { 40 };
        if shentsize < min_entsize {
            return Err(Error::ElfParse {
                offset: shentsize_at,
                reason: format!("section header entry size {shentsize} < {min_entsize}"),
            });
        }
        // Extended numbering keeps the real counts in section 0.
        if shnum == 0 || shstrndx == SHN_XINDEX as u64 {
            let first = read_section_header(&reader, shoff)?;
            if shnum == 0 {
                shnum = first.size;
            }
            if shstrndx == SHN_XINDEX as u64 {
                shstrndx = first.link as u64;
            }
        }
        let table_size = shnum.checked_mul(shentsize).ok_or_else(|| Error::ElfParse {
            offset: shnum_at,
            reason: "section header table size overflows".into(),
        })?;
        reader.slice("section header table", shoff, table_size)?;

        let mut sections = (0..shnum)
            .map(|i| read_section_header(&reader, shoff + i * shentsize))
            .collect::<Result<Vec<_>>>()?;

        if shnum > 0 {
            if shstrndx >= shnum {
                return Err(Error::ElfParse {
                    offset: shstrndx_at,
                    reason: format!("section name table index {shstrndx} >= section count {shnum}"),
                });
            }
            let names = section_data(&reader, &sections[shstrndx as usize])?;
            let name_table_offset = sections[shstrndx as usize].offset;
            for s in &mut sections {
                s.name = cstr_at(names, s.name_index as u64, name_table_offset)?;
            }
        }
        Ok(Self { reader, sections })
    }

    fn find(&self, kind: u32) -> Option<&Section> {
        self.sections.iter().find(|s| s.kind == kind)
    }
}

fn read_section_header(r: &Reader<'_>, at: u64) -> Result<Section> {
    let name = r.u32(at)?;
    let kind = r.u32(at + 4)?;
    let (flags, offset, size, link, entsize) = if r.is64 {
        (
            r.u64(at + 8)?,
            r.u64(at + 24)?,
            r.u64(at + 32)?,
            r.u32(at + 40)?,
            r.u64(at + 56)?,
        )
    } else {
        (
            r.u32(at + 8)? as u64,
            r.u32(at + 16)? as u64,
            r.u32(at + 20)? as u64,
            r.u32(at + 24)?,
            r.u32(at + 36)? as u64,
        )
    };
    Ok(Section {
        name_index: name,
        name: String::new(),
        kind,
        flags,
        offset,
        size,
        link,
        entsize,
        header_offset: at,
    })
}

fn section_data<'a>(r: &Reader<'a>, s: &Section) -> Result<&'a [u8]> {
    if s.kind == SHT_NOBITS {
        return Ok(&[]);
    }
    r.slice(
        &format!("section `{}` (header at {:#x})", s.name, s.header_offset),
        s.offset,
        s.size,
    )
}

fn cstr_at(table: &[u8], index: u64, table_offset: u64) -> Result<String> {
    let start = index as usize;
    if start > table.len() {
        return Err(Error::ElfParse {
            offset: table_offset + index,
            reason: format!("string index {index} beyond table of {} bytes", table.len()),
        });
    }
    let rest = &table[start..];
    let end = rest.iter().position(|&b| b == 0).ok_or_else(|| Error::ElfParse {
        offset: table_offset + index,
        reason: "unterminated string".into(),
    })?;
    Ok(String::from_utf8_lossy(&rest[..end]).into_owned())
}

fn is_string_section(s: &Section) -> bool {
    s.kind == SHT_PROGBITS
        && s.flags & SHF_ALLOC != 0
        && s.flags & SHF_EXECINSTR == 0
        && (s.name.starts_with(".rodata") || s.name.starts_with(".data"))
}

fn exported_functions(elf: &ElfFile<'_>) -> Result<BTreeSet<String>> {
    let Some(symtab) = elf.find(SHT_DYNSYM).or_else(|| elf.find(SHT_SYMTAB)) else {
        return Ok(BTreeSet::new());
    };
    let r = &elf.reader;
    let strtab = elf.sections.get(symtab.link as usize).ok_or_else(|| Error::ElfParse {
        offset: symtab.header_offset + if r.is64 { 40 } else { 24 },
        reason: format!("symbol table links to missing section {}", symtab.link),
    })?;
    let names = section_data(r, strtab)?;
    let data = section_data(r, symtab)?;
    let min_entsize = if r.is64 { 24 } else { 16 };
    let entsize = if symtab.entsize >= min_entsize {
        symtab.entsize
    } else {
        min_entsize
    };

    let mut out = BTreeSet::new();
    let sub = Reader { data, ..*r };
    for i in 0..(data.len() as u64 / entsize) {
        let at = i * entsize;
        let (name, info, other, shndx) = if r.is64 {
            (
                sub.u32(at)?,
                data[at as usize + 4],
                data[at as usize + 5],
                sub.u16(at + 6)?,
            )
        } else {
            (
                sub.u32(at)?,
                data[at as usize + 12],
                data[at as usize + 13],
                sub.u16(at + 14)?,
            )
        };
        let kind = info & 0xf;
        let bind = info >> 4;
        let visibility = other & 0x3;
        if !matches!(kind, STT_FUNC | STT_GNU_IFUNC)
            || !matches!(bind, STB_GLOBAL | STB_WEAK | STB_GNU_UNIQUE)
            || !matches!(visibility, STV_DEFAULT | STV_PROTECTED)
            || shndx == SHN_UNDEF
        {
            continue;
        }
        let name = cstr_at(names, name as u64, strtab.offset)?;
        if !name.is_empty() {
            out.insert(name);
        }
    }
    Ok(out)
}

/// Extracts string literals from data sections and exported function names
/// from the dynamic symbol table (or the static one when there is no dynamic
/// table). Both outputs are deduplicated and sorted.
pub fn extract_elf_basics(binary: &[u8], opts: &ExtractOptions) -> Result<(Vec<StringLiteral>, BTreeSet<String>)> {
    let elf = ElfFile::parse(binary)?;
    let mut strings = BTreeMap::new();
    for section in elf.sections.iter().filter(|s| is_string_section(s)) {
        let data = section_data(&elf.reader, section)?;
        for s in scan_strings(data, opts.min_string_len) {
            strings
                .entry(s.clone())
                .or_insert_with(|| StringLiteral::new(s, &opts.weighting));
        }
    }
    let exports = exported_functions(&elf)?;
    Ok((strings.into_values().collect(), exports))
}

/// Builds a basic-features-only [`BinaryFeatureSet`] from ELF bytes.
pub fn elf_feature_set(binary_id: impl Into<String>, binary: &[u8], opts: &ExtractOptions) -> Result<BinaryFeatureSet> {
    let (strings, exports) = extract_elf_basics(binary, opts)?;
    Ok(BinaryFeatureSet::basic(binary_id, strings, exports))
}
